use serde::Serialize;

use super::params::{ParamGrads, ParamId, ParamStore};
use super::rng::SeededRng;
use crate::error::Result;

/// Worst coordinate seen by [`finite_diff_check`].
#[derive(Clone, Debug, Serialize)]
pub struct WorstCoord {
    pub param: String,
    pub offset: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    pub groups_checked: usize,
    pub worst: Option<WorstCoord>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` against five-point central differences of `loss`
/// at the given `(parameter, flat offset)` coordinates. The stencil's
/// truncation error is O(h⁴), so `h` can be large enough to keep rounding
/// noise well below small gradients.
pub fn finite_diff_check<F>(
    loss: F,
    params: &ParamStore,
    analytic: &ParamGrads,
    coords: &[(ParamId, usize)],
    h: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<f64>,
{
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coords_checked: 0,
        groups_checked: 0,
        worst: None,
    };
    let mut seen = std::collections::BTreeSet::new();
    for &(id, offset) in coords {
        let original = params.get(id).data()[offset];
        let mut at = |delta: f64| {
            probe.get_mut(id).data_mut()[offset] = original + delta;
            loss(&probe)
        };
        let (p2, p1, m1, m2) = (at(2.0 * h)?, at(h)?, at(-h)?, at(-2.0 * h)?);
        probe.get_mut(id).data_mut()[offset] = original;

        let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
        let a = analytic.get(id).data()[offset];
        let err = relative_error(a, numeric);
        report.coords_checked += 1;
        seen.insert(id);
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some(WorstCoord {
                param: params.name(id).to_string(),
                offset,
                analytic: a,
                numeric,
            });
        }
    }
    report.groups_checked = seen.len();
    Ok(report)
}

/// At least one coordinate from every tensor in `params`, then uniform
/// draws until `total` coordinates are collected.
pub fn sample_coords(params: &ParamStore, total: usize, rng: &mut SeededRng) -> Vec<(ParamId, usize)> {
    let mut coords: Vec<(ParamId, usize)> = params
        .iter()
        .map(|(id, _, t)| (id, rng.below(t.len())))
        .collect();
    let sizes: Vec<usize> = params.iter().map(|(_, _, t)| t.len()).collect();
    let numel: usize = sizes.iter().sum();
    while coords.len() < total {
        let mut flat = rng.below(numel);
        for (id, &n) in params.ids().zip(&sizes) {
            if flat < n {
                coords.push((id, flat));
                break;
            }
            flat -= n;
        }
    }
    coords
}
