use serde::{Deserialize, Serialize};

use super::special::normal_two_sided;
use super::{check_series, StatsError};

/// Largest per-sample size for which the exact null distribution is used.
pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PValueMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitneyResult {
    /// Pairs `(x, y)`, `x` from `a` and `y` from `b`, with `x < y`, plus half
    /// the tied pairs.
    pub u: f64,
    /// The same count with the roles of `a` and `b` swapped; `u + u_other`
    /// is `n_a * n_b`.
    pub u_other: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub method: PValueMethod,
    /// Every value in both samples is identical.
    pub degenerate: bool,
}

/// Two-sided Mann–Whitney U test.
///
/// With both samples of at most [`EXACT_MAX_N`] values the p-value comes from
/// the exact permutation distribution of U given the observed tie structure.
/// Otherwise it uses the normal approximation with tie-corrected variance and
/// a 0.5 continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitneyResult, StatsError> {
    check_series("a", a)?;
    check_series("b", b)?;
    let (na, nb) = (a.len(), b.len());

    let groups = tie_groups(a, b);
    // U in half units, so ties stay integral.
    let mut u2: u64 = 0;
    let mut a_below: u64 = 0;
    for g in &groups {
        u2 += 2 * a_below * g.from_b + g.from_a * g.from_b;
        a_below += g.from_a;
    }
    let u = u2 as f64 / 2.0;
    let u_other = (na * nb) as f64 - u;

    let method = if na <= EXACT_MAX_N && nb <= EXACT_MAX_N {
        PValueMethod::Exact
    } else {
        PValueMethod::Normal
    };
    if groups.len() == 1 {
        return Ok(MannWhitneyResult { u, u_other, p: 1.0, method, degenerate: true });
    }
    let p = match method {
        PValueMethod::Exact => exact_p(&groups, na, u2),
        PValueMethod::Normal => normal_p(&groups, na, nb, u),
    };
    Ok(MannWhitneyResult { u, u_other, p, method, degenerate: false })
}

/// Run of equal values in the pooled sorted sample.
#[derive(Debug, Clone, Copy)]
struct TieGroup {
    from_a: u64,
    from_b: u64,
}

impl TieGroup {
    fn size(&self) -> u64 {
        self.from_a + self.from_b
    }
}

fn tie_groups(a: &[f64], b: &[f64]) -> Vec<TieGroup> {
    let mut pooled: Vec<(f64, bool)> = a
        .iter()
        .map(|&x| (x, true))
        .chain(b.iter().map(|&y| (y, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut groups: Vec<TieGroup> = Vec::new();
    let mut last = None;
    for (value, in_a) in pooled {
        // -0.0 and 0.0 are equal values.
        if last != Some(value) {
            groups.push(TieGroup { from_a: 0, from_b: 0 });
            last = Some(value);
        }
        let g = groups.last_mut().expect("pushed above");
        if in_a {
            g.from_a += 1;
        } else {
            g.from_b += 1;
        }
    }
    groups
}

/// Exact two-sided p-value: the tie groups are fixed and every way of drawing
/// `na` members for `a` out of the pooled sample is equally likely.
fn exact_p(groups: &[TieGroup], na: usize, observed_u2: u64) -> f64 {
    let n_total: u64 = groups.iter().map(TieGroup::size).sum();
    let nb = n_total as usize - na;
    let max_u2 = 2 * na * nb;
    // ways[i][u2]: placements of i members of `a` among the groups seen so
    // far that yield doubled U of u2.
    let mut ways = vec![vec![0f64; max_u2 + 1]; na + 1];
    ways[0][0] = 1.0;
    let mut seen = 0usize;
    for g in groups {
        let size = g.size() as usize;
        let mut next = vec![vec![0f64; max_u2 + 1]; na + 1];
        for (ia, row) in ways.iter().enumerate() {
            if ia > seen {
                break;
            }
            let ib = seen - ia;
            for (u2, &count) in row.iter().enumerate() {
                if count == 0.0 {
                    continue;
                }
                for k in 0..=size.min(na - ia) {
                    let to_b = size - k;
                    if ib + to_b > nb {
                        continue;
                    }
                    let add = 2 * ia * to_b + k * to_b;
                    next[ia + k][u2 + add] += count * binomial(size, k);
                }
            }
        }
        ways = next;
        seen += size;
    }
    let dist = &ways[na];
    let total: f64 = dist.iter().sum();
    let observed = observed_u2 as usize;
    let lower: f64 = dist[..=observed].iter().sum();
    let upper: f64 = dist[observed..].iter().sum();
    (2.0 * lower.min(upper) / total).min(1.0)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

fn normal_p(groups: &[TieGroup], na: usize, nb: usize, u: f64) -> f64 {
    let (na, nb) = (na as f64, nb as f64);
    let n = na + nb;
    let ties: f64 = groups
        .iter()
        .map(|g| {
            let t = g.size() as f64;
            t * t * t - t
        })
        .sum();
    let var = na * nb / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((u - na * nb / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
    normal_two_sided(z)
}
