//! Finite-difference verification of the analytic gradient.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::EOS;
use crate::error::{Error, Result};
use crate::model::{ParamGroup, Seq2SeqModel};

/// Relative errors are computed as `|a - n| / max(|a|, |n|, FLOOR)`, so
/// coordinates whose true gradient is (numerically) zero are judged on
/// absolute error instead of amplified rounding noise.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Largest allowed step. Rounding error of the central difference scales
/// like `ulp(loss) / epsilon`, so the largest step is the most accurate
/// for these smooth losses.
pub const DEFAULT_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupError {
    pub group: ParamGroup,
    pub coordinates: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckReport {
    pub max_relative_error: f64,
    pub coordinates: usize,
    pub groups: Vec<GroupError>,
}

fn loss(model: &Seq2SeqModel, source: &[usize], steps: &[usize]) -> Result<f64> {
    Ok(-model.step_log_probs(source, steps)?.iter().sum::<f64>())
}

/// Compares the analytic gradient of `-log p(target + EOS | source)` with
/// central differences on a random subset of at least `min_coords`
/// coordinates, spread evenly over every non-empty parameter group.
pub fn gradient_check(
    model: &Seq2SeqModel,
    source: &[usize],
    target: &[usize],
    epsilon: f64,
    min_coords: usize,
    seed: u64,
) -> Result<GradientCheckReport> {
    if !(1e-6..=1e-4).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be in [1e-6, 1e-4], got {epsilon}"
        )));
    }
    if target.is_empty() {
        return Err(Error::EmptyInput { what: "target" });
    }
    let steps: Vec<usize> = target.iter().copied().chain([EOS]).collect();
    let mut analytic = vec![0.0; model.num_params()];
    model.accumulate_gradient(source, &steps, 1.0, &mut analytic)?;

    let groups: Vec<(ParamGroup, std::ops::Range<usize>)> = ParamGroup::ALL
        .iter()
        .map(|&g| (g, model.group_range(g)))
        .filter(|(_, r)| !r.is_empty())
        .collect();
    let per_group = min_coords.div_ceil(groups.len()).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let mut report = GradientCheckReport {
        max_relative_error: 0.0,
        coordinates: 0,
        groups: Vec::new(),
    };
    for (group, range) in groups {
        let k = per_group.min(range.len());
        let mut worst: f64 = 0.0;
        for offset in sample(&mut rng, range.len(), k) {
            let i = range.start + offset;
            let orig = probe.params()[i];
            probe.params_mut()[i] = orig + epsilon;
            let up = loss(&probe, source, &steps)?;
            probe.params_mut()[i] = orig - epsilon;
            let down = loss(&probe, source, &steps)?;
            probe.params_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            let a = analytic[i];
            let denom = a.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
        }
        report.coordinates += k;
        report.max_relative_error = report.max_relative_error.max(worst);
        report.groups.push(GroupError {
            group,
            coordinates: k,
            max_relative_error: worst,
        });
    }
    Ok(report)
}
