use std::collections::BTreeMap;

use super::EvalError;

/// Nominal Krippendorff's alpha over a units × annotators matrix with
/// missing labels as `None`. Units with fewer than two labels are not
/// pairable and are ignored.
pub fn krippendorff_alpha<L: Ord + Clone>(units: &[Vec<Option<L>>]) -> Result<f64, EvalError> {
    // Coincidence matrix o[c][k]: each ordered pair of labels from different
    // annotators in unit u contributes 1 / (m_u − 1).
    let mut o: BTreeMap<(L, L), f64> = BTreeMap::new();
    for unit in units {
        let vals: Vec<&L> = unit.iter().flatten().collect();
        let m = vals.len();
        if m < 2 {
            continue;
        }
        let w = 1.0 / (m - 1) as f64;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    *o.entry((vals[i].clone(), vals[j].clone())).or_insert(0.0) += w;
                }
            }
        }
    }
    let mut n_c: BTreeMap<L, f64> = BTreeMap::new();
    for ((c, _), v) in &o {
        *n_c.entry(c.clone()).or_insert(0.0) += v;
    }
    let n: f64 = n_c.values().sum();
    if n < 2.0 {
        return Err(EvalError::Invalid("fewer than two pairable values".into()));
    }
    let observed: f64 = o.iter().filter(|((c, k), _)| c != k).map(|(_, v)| v).sum();
    if observed == 0.0 {
        return Ok(1.0);
    }
    let totals: Vec<f64> = n_c.values().copied().collect();
    let expected: f64 = totals.iter().map(|a| a * (n - a)).sum();
    Ok(1.0 - (n - 1.0) * observed / expected)
}
