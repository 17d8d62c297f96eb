//! Network statistics, portfolio concentration, rank correlations, and
//! the market-depth scaling sweep.
//!
//! Self-loops are excluded from every graph statistic. Link presence in
//! the "unweighted" views uses a small threshold (default 1e-9 times the
//! mean positive off-diagonal weight) so floating-point dust left behind
//! by the optimizer does not count as an edge.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::Serialize;

use crate::debtrank::debtrank_all;
use crate::error::{Error, Result};
use crate::market::{project_overlap, BipartiteMarket, OverlapNetwork};

/// Scalar summary of an undirected weighted network.
#[derive(Debug, Clone, Serialize)]
pub struct NetworkStats {
    pub density: f64,
    pub avg_degree_unweighted: f64,
    /// Average strength; carries the weights' monetary units.
    pub avg_degree_weighted: f64,
    /// Global transitivity: 3 * triangles / connected triples.
    pub clustering_unweighted: f64,
    /// Mean of the per-node weighted clustering coefficients.
    pub clustering_weighted: f64,
    pub avg_nn_degree_unweighted: f64,
    pub avg_nn_degree_weighted: f64,
    /// Longest shortest path; `None` when the graph is disconnected or
    /// has fewer than two nodes.
    pub diameter_unweighted: Option<usize>,
}

fn default_threshold(weights: &Array2<f64>) -> f64 {
    let n = weights.nrows();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in 0..n {
            if i != j && weights[[i, j]] > 0.0 {
                sum += weights[[i, j]];
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        1e-9 * sum / count as f64
    }
}

fn adjacency(weights: &Array2<f64>, threshold: f64) -> Vec<Vec<usize>> {
    let n = weights.nrows();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && weights[[i, j]] > threshold {
                adj[i].push(j);
            }
        }
    }
    adj
}

/// Fraction of possible bank-asset links that are present.
pub fn bipartite_density(market: &BipartiteMarket, threshold: Option<f64>) -> Result<f64> {
    let k_count = market.n_assets();
    let n = market.n_banks();
    if k_count == 0 || n == 0 {
        return Err(Error::EmptyMarket("no assets or banks".into()));
    }
    let thr = threshold.unwrap_or_else(|| {
        let mut sum = 0.0;
        let mut count = 0usize;
        for v in market.holdings().iter() {
            if *v > 0.0 {
                sum += v;
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            1e-9 * sum / count as f64
        }
    });
    let links = market.holdings().iter().filter(|&&v| v > thr).count();
    Ok(links as f64 / (k_count * n) as f64)
}

/// Degree, strength, clustering, nearest-neighbor degree, density, and
/// diameter of the one-mode projection.
pub fn projection_stats(network: &OverlapNetwork, threshold: Option<f64>) -> Result<NetworkStats> {
    let w = &network.exposure;
    let n = w.nrows();
    if n == 0 {
        return Err(Error::EmptyMarket("projection has no nodes".into()));
    }
    let thr = threshold.unwrap_or_else(|| default_threshold(w));
    let adj = adjacency(w, thr);

    let degrees: Vec<usize> = adj.iter().map(|nb| nb.len()).collect();
    let strengths: Vec<f64> = (0..n)
        .map(|i| adj[i].iter().map(|&j| w[[i, j]]).sum())
        .collect();

    let links: usize = degrees.iter().sum::<usize>() / 2;
    let density = if n > 1 {
        links as f64 / (n * (n - 1) / 2) as f64
    } else {
        0.0
    };
    let avg_degree_unweighted = degrees.iter().sum::<usize>() as f64 / n as f64;
    let avg_degree_weighted = strengths.iter().sum::<f64>() / n as f64;

    // Global transitivity.
    let mut triangles3 = 0usize;
    let mut triples = 0usize;
    let is_edge = |a: usize, b: usize| w[[a, b]] > thr;
    for i in 0..n {
        let d = degrees[i];
        triples += d * d.saturating_sub(1) / 2;
        for a in 0..adj[i].len() {
            for b in (a + 1)..adj[i].len() {
                if is_edge(adj[i][a], adj[i][b]) {
                    triangles3 += 1;
                }
            }
        }
    }
    // Each triangle was counted once per corner.
    let clustering_unweighted = if triples > 0 {
        triangles3 as f64 / triples as f64
    } else {
        0.0
    };

    let local = node_clustering(network, Some(thr));
    let defined: Vec<f64> = local.iter().filter_map(|c| c.map(|(_, cw)| cw)).collect();
    let clustering_weighted = if defined.is_empty() {
        0.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };

    let mut nn_u_sum = 0.0;
    let mut nn_w_sum = 0.0;
    let mut nn_count = 0usize;
    for i in 0..n {
        if degrees[i] == 0 {
            continue;
        }
        let nb_degree_sum: usize = adj[i].iter().map(|&j| degrees[j]).sum();
        nn_u_sum += nb_degree_sum as f64 / degrees[i] as f64;
        if strengths[i] > 0.0 {
            let weighted: f64 = adj[i].iter().map(|&j| w[[i, j]] * degrees[j] as f64).sum();
            nn_w_sum += weighted / strengths[i];
        }
        nn_count += 1;
    }
    let avg_nn_degree_unweighted = if nn_count > 0 { nn_u_sum / nn_count as f64 } else { 0.0 };
    let avg_nn_degree_weighted = if nn_count > 0 { nn_w_sum / nn_count as f64 } else { 0.0 };

    Ok(NetworkStats {
        density,
        avg_degree_unweighted,
        avg_degree_weighted,
        clustering_unweighted,
        clustering_weighted,
        avg_nn_degree_unweighted,
        avg_nn_degree_weighted,
        diameter_unweighted: diameter(&adj),
    })
}

/// Per-node local clustering `(unweighted, weighted)`; `None` for nodes
/// with fewer than two neighbors, where the coefficient is undefined.
pub fn node_clustering(
    network: &OverlapNetwork,
    threshold: Option<f64>,
) -> Vec<Option<(f64, f64)>> {
    let w = &network.exposure;
    let n = w.nrows();
    let thr = threshold.unwrap_or_else(|| default_threshold(w));
    let adj = adjacency(w, thr);

    (0..n)
        .map(|i| {
            let d = adj[i].len();
            if d < 2 {
                return None;
            }
            let strength: f64 = adj[i].iter().map(|&j| w[[i, j]]).sum();
            if strength <= 0.0 {
                return None;
            }
            let mut closed = 0usize;
            let mut barrat = 0.0;
            for a in 0..d {
                for b in 0..d {
                    if a == b {
                        continue;
                    }
                    let (j, h) = (adj[i][a], adj[i][b]);
                    if w[[j, h]] > thr {
                        if a < b {
                            closed += 1;
                        }
                        barrat += w[[i, j]] + w[[i, h]];
                    }
                }
            }
            let unweighted = 2.0 * closed as f64 / (d * (d - 1)) as f64;
            let weighted = barrat / (2.0 * strength * (d - 1) as f64);
            Some((unweighted, weighted))
        })
        .collect()
}

fn diameter(adj: &[Vec<usize>]) -> Option<usize> {
    let n = adj.len();
    if n < 2 {
        return None;
    }
    let mut max_dist = 0usize;
    let mut dist = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    for start in 0..n {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[start] = 0;
        queue.clear();
        queue.push_back(start);
        let mut reached = 1usize;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    max_dist = max_dist.max(dist[v]);
                    reached += 1;
                    queue.push_back(v);
                }
            }
        }
        if reached < n {
            return None;
        }
    }
    Some(max_dist)
}

/// Portfolio concentration per bank.
#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationReport {
    /// `H_i = sum_k (V_ki / V_i)^2`; `None` for banks with no holdings.
    pub per_bank: Vec<Option<f64>>,
    /// Mean over the included banks.
    pub mean: f64,
    pub excluded: Vec<usize>,
}

pub fn hhi(market: &BipartiteMarket) -> Result<ConcentrationReport> {
    let totals = market.bank_totals();
    let holdings = market.holdings();
    let mut per_bank = Vec::with_capacity(market.n_banks());
    let mut excluded = Vec::new();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..market.n_banks() {
        if totals[i] > 0.0 {
            let mut h = 0.0;
            for k in 0..market.n_assets() {
                let share = holdings[[k, i]] / totals[i];
                h += share * share;
            }
            per_bank.push(Some(h));
            sum += h;
            count += 1;
        } else {
            per_bank.push(None);
            excluded.push(i);
        }
    }
    if count == 0 {
        return Err(Error::EmptyMarket("no bank with positive holdings".into()));
    }
    Ok(ConcentrationReport {
        per_bank,
        mean: sum / count as f64,
        excluded,
    })
}

/// Spearman's rho and Kendall's tau-b; `None` components signal an
/// undefined correlation (constant input).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RankCorrelation {
    pub spearman: Option<f64>,
    pub kendall: Option<f64>,
}

pub fn rank_correlation(a: &[f64], b: &[f64]) -> Result<RankCorrelation> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "rank correlation inputs",
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::DimensionMismatch {
            context: "rank correlation needs at least two observations",
            expected: 2,
            actual: a.len(),
        });
    }
    Ok(RankCorrelation {
        spearman: spearman(a, b),
        kendall: kendall_tau_b(a, b),
    })
}

/// Average ranks (ties share the mean of their positional ranks).
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| values[x].partial_cmp(&values[y]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut pos = 0usize;
    while pos < n {
        let mut end = pos;
        while end + 1 < n && values[order[end + 1]] == values[order[pos]] {
            end += 1;
        }
        let rank = (pos + end) as f64 / 2.0 + 1.0;
        for &idx in &order[pos..=end] {
            ranks[idx] = rank;
        }
        pos = end + 1;
    }
    ranks
}

fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    pearson(&ra, &rb)
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (xi, yi) in x.iter().zip(y.iter()) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx) * (xi - mx);
        syy += (yi - my) * (yi - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn kendall_tau_b(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    let mut ties_a = 0i64;
    let mut ties_b = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            if da == 0.0 && db == 0.0 {
                ties_a += 1;
                ties_b += 1;
            } else if da == 0.0 {
                ties_a += 1;
            } else if db == 0.0 {
                ties_b += 1;
            } else if da * db > 0.0 {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = (((n0 - ties_a) as f64) * ((n0 - ties_b) as f64)).sqrt();
    if denom == 0.0 {
        return None;
    }
    Some((concordant - discordant) as f64 / denom)
}

/// One point of the market-depth scaling sweep.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepPoint {
    pub c: f64,
    pub mean_debtrank: f64,
}

/// Mean DebtRank as a function of the depth scale parameter: each `c`
/// rescales every depth, rebuilds the projection, and reruns DebtRank.
/// Points are computed in parallel and returned in input order.
pub fn sweep_depth_scale(
    market: &BipartiteMarket,
    c_values: &[f64],
    psi: f64,
) -> Result<Vec<SweepPoint>> {
    c_values
        .par_iter()
        .map(|&c| {
            let scaled = market.with_depth_scale(c)?;
            let network = project_overlap(&scaled)?;
            let result = debtrank_all(&network.impact, &network.economic_value, psi)?;
            Ok(SweepPoint {
                c,
                mean_debtrank: result.mean,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{Asset, Bank};
    use ndarray::array;

    fn network_from_exposure(exposure: Array2<f64>) -> OverlapNetwork {
        let n = exposure.nrows();
        OverlapNetwork {
            impact: exposure.mapv(|w| w.min(1.0)),
            economic_value: Array1::from_elem(n, 1.0 / n as f64),
            exposure,
        }
    }

    fn market(holdings: Array2<f64>) -> BipartiteMarket {
        let k = holdings.nrows();
        let n = holdings.ncols();
        BipartiteMarket::new(
            (0..k)
                .map(|i| Asset {
                    id: format!("a{i}"),
                    adv: 25.0,
                    volatility: 0.01,
                    depth: 1000.0,
                    expected_return: 0.001,
                })
                .collect(),
            (0..n)
                .map(|i| Bank {
                    id: format!("b{i}"),
                    equity: 10.0,
                    other_assets: 0.0,
                })
                .collect(),
            holdings,
            0.4,
        )
        .unwrap()
    }

    #[test]
    fn complete_triangle_stats() {
        let mut exposure = Array2::from_elem((3, 3), 2.0);
        for i in 0..3 {
            exposure[[i, i] ] = 5.0;
        }
        let stats = projection_stats(&network_from_exposure(exposure), None).unwrap();
        assert_eq!(stats.density, 1.0);
        assert_eq!(stats.clustering_unweighted, 1.0);
        assert_eq!(stats.clustering_weighted, 1.0);
        assert_eq!(stats.diameter_unweighted, Some(1));
        assert_eq!(stats.avg_degree_unweighted, 2.0);
        assert_eq!(stats.avg_degree_weighted, 4.0);
    }

    #[test]
    fn star_has_no_triangles() {
        let mut exposure = Array2::zeros((4, 4));
        for leaf in 1..4 {
            exposure[[0, leaf]] = 1.0;
            exposure[[leaf, 0]] = 1.0;
        }
        let stats = projection_stats(&network_from_exposure(exposure), None).unwrap();
        assert_eq!(stats.clustering_unweighted, 0.0);
        assert_eq!(stats.diameter_unweighted, Some(2));
        // Hub degree 3, leaves 1.
        assert_eq!(stats.avg_degree_unweighted, 1.5);
    }

    #[test]
    fn disconnected_graph_has_no_diameter() {
        let mut exposure = Array2::zeros((4, 4));
        exposure[[0, 1]] = 1.0;
        exposure[[1, 0]] = 1.0;
        exposure[[2, 3]] = 1.0;
        exposure[[3, 2]] = 1.0;
        let stats = projection_stats(&network_from_exposure(exposure), None).unwrap();
        assert_eq!(stats.diameter_unweighted, None);
        assert_eq!(stats.density, 2.0 / 6.0);
    }

    #[test]
    fn bipartite_density_counts_links() {
        let m = market(array![[1.0, 0.0, 3.0], [0.0, 2.0, 4.0]]);
        assert_eq!(bipartite_density(&m, None).unwrap(), 4.0 / 6.0);
    }

    #[test]
    fn hhi_uniform_and_concentrated() {
        let m = market(array![[25.0, 100.0], [25.0, 0.0], [25.0, 0.0], [25.0, 0.0]]);
        let report = hhi(&m).unwrap();
        assert_eq!(report.per_bank[0], Some(0.25));
        assert_eq!(report.per_bank[1], Some(1.0));
        assert_eq!(report.mean, 0.625);
    }

    #[test]
    fn hhi_excludes_empty_banks() {
        let m = market(array![[10.0, 0.0], [30.0, 0.0]]);
        let report = hhi(&m).unwrap();
        assert_eq!(report.per_bank[1], None);
        assert_eq!(report.excluded, vec![1]);
        assert_eq!(report.mean, 0.0625 + 0.5625);
    }

    #[test]
    fn rank_correlation_extremes() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [10.0, 20.0, 30.0, 40.0];
        let r = rank_correlation(&a, &b).unwrap();
        assert_eq!(r.spearman, Some(1.0));
        assert_eq!(r.kendall, Some(1.0));

        let rev = [40.0, 30.0, 20.0, 10.0];
        let r = rank_correlation(&a, &rev).unwrap();
        assert_eq!(r.spearman, Some(-1.0));
        assert_eq!(r.kendall, Some(-1.0));
    }

    #[test]
    fn rank_correlation_of_constant_is_undefined() {
        let a = [1.0, 1.0, 1.0];
        let b = [1.0, 2.0, 3.0];
        let r = rank_correlation(&a, &b).unwrap();
        assert_eq!(r.spearman, None);
        assert_eq!(r.kendall, None);
    }

    #[test]
    fn rank_correlation_handles_ties() {
        let a = [1.0, 1.0, 2.0, 3.0];
        let b = [1.0, 2.0, 3.0, 4.0];
        let r = rank_correlation(&a, &b).unwrap();
        assert!(r.spearman.unwrap() > 0.9);
        let tau = r.kendall.unwrap();
        assert!(tau > 0.9 && tau <= 1.0);
    }

    #[test]
    fn sweep_is_non_increasing_on_simple_market() {
        let m = market(array![[100.0, 80.0], [60.0, 90.0]]);
        let cs = [0.1, 0.2, 0.4, 0.8, 1.6];
        let points = sweep_depth_scale(&m, &cs, 1.0).unwrap();
        for pair in points.windows(2) {
            assert!(pair[1].mean_debtrank <= pair[0].mean_debtrank + 1e-15);
        }
    }

    #[test]
    fn doubling_c_halves_exposure() {
        let m = market(array![[100.0, 80.0], [60.0, 90.0]]);
        let base = project_overlap(&m).unwrap();
        let doubled = project_overlap(&m.with_depth_scale(0.8).unwrap()).unwrap();
        for (a, b) in base.exposure.iter().zip(doubled.exposure.iter()) {
            assert!((b - a / 2.0).abs() <= 1e-12 * a.abs().max(1e-300));
        }
    }
}
