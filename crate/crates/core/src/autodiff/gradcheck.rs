//! Central finite-difference verification of every primitive's adjoint.
//!
//! Checks run in double precision with step 1e-5. Relative error per element
//! is `|a - n| / max(|a|, |n|, 1e-3)`; an op passes when the maximum over
//! all differentiable inputs is within its tolerance. The suite carries one
//! negative control: a relu whose claimed adjoint is the identity, which the
//! checker must flag as failing.

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::rng::SplitMix64;
use serde::Serialize;

const FD_STEP: f64 = 1e-5;
/// Conv and batch-norm tier.
pub const TOL_COARSE: f64 = 1e-4;
/// Elementwise and loss tier.
pub const TOL_FINE: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckEntry {
    pub name: String,
    pub tolerance: f64,
    pub max_rel_err: f64,
    pub pass: bool,
    /// True for the deliberately broken adjoint that must NOT pass.
    pub negative_control: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    /// All real primitives pass and the negative control is caught.
    pub suite_pass: bool,
}

struct InputSpec {
    shape: Vec<usize>,
    lo: f64,
    hi: f64,
    differentiable: bool,
}

impl InputSpec {
    fn new(shape: &[usize], lo: f64, hi: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            lo,
            hi,
            differentiable: true,
        }
    }

    fn constant(shape: &[usize], lo: f64, hi: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            lo,
            hi,
            differentiable: false,
        }
    }
}

type Builder = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Var>;

fn sample(rng: &mut SplitMix64, spec: &InputSpec) -> Tensor<f64> {
    let n: usize = spec.shape.iter().product::<usize>().max(1);
    let data: Vec<f64> = (0..n)
        .map(|_| spec.lo + (spec.hi - spec.lo) * rng.next_f64())
        .collect();
    Tensor::from_vec(&spec.shape, data)
}

/// Weights for reducing a non-scalar op output to the scalar root.
fn reduce_weights(rng: &mut SplitMix64, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.next_f64() * 2.0 - 1.0).collect()
}

fn forward(inputs: &[Tensor<f64>], specs: &[InputSpec], build: &Builder) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .zip(specs)
        .map(|(t, s)| {
            if s.differentiable {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        })
        .collect();
    let root = build(&mut g, &vars);
    g.value(root).item()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

fn check_op(name: &str, tolerance: f64, seed: u64, specs: &[InputSpec], build: Builder) -> GradCheckEntry {
    let mut rng = SplitMix64::new(seed);
    let inputs: Vec<Tensor<f64>> = specs.iter().map(|s| sample(&mut rng, s)).collect();

    // analytic gradients
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .zip(specs)
        .map(|(t, s)| {
            if s.differentiable {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        })
        .collect();
    let root = build(&mut g, &vars);
    g.backward(root).expect("scalar root");

    let mut max_err = 0.0f64;
    for (i, spec) in specs.iter().enumerate() {
        if !spec.differentiable {
            continue;
        }
        let analytic = g
            .grad(vars[i])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(&spec.shape));
        for j in 0..inputs[i].len() {
            let mut plus = inputs.clone();
            plus[i].data_mut()[j] += FD_STEP;
            let mut minus = inputs.clone();
            minus[i].data_mut()[j] -= FD_STEP;
            let numeric =
                (forward(&plus, specs, &build) - forward(&minus, specs, &build)) / (2.0 * FD_STEP);
            max_err = max_err.max(rel_err(analytic.data()[j], numeric));
        }
    }
    GradCheckEntry {
        name: name.to_string(),
        tolerance,
        max_rel_err: max_err,
        pass: max_err <= tolerance,
        negative_control: false,
    }
}

/// Relu with its backward replaced by the identity: the checker must fail it.
fn negative_control(seed: u64) -> GradCheckEntry {
    let mut rng = SplitMix64::new(seed);
    let spec = InputSpec::new(&[8], 0.1, 1.5); // positive and negative halves
    let mut input = sample(&mut rng, &spec);
    for (i, v) in input.data_mut().iter_mut().enumerate() {
        if i % 2 == 0 {
            *v = -*v; // guarantee some strictly negative entries
        }
    }
    let weights = reduce_weights(&mut rng, 8);
    let w2 = weights.clone();
    let specs = vec![spec];
    let build: Builder = Box::new(move |g, vars| {
        let y = g.relu(vars[0]).unwrap();
        g.dot_const(y, &w2).unwrap()
    });

    // "identity adjoint": claims d relu / dx == 1 everywhere
    let broken_analytic: Vec<f64> = weights.clone();
    let inputs = vec![input];
    let mut max_err = 0.0f64;
    for j in 0..inputs[0].len() {
        let mut plus = inputs.clone();
        plus[0].data_mut()[j] += FD_STEP;
        let mut minus = inputs.clone();
        minus[0].data_mut()[j] -= FD_STEP;
        let numeric =
            (forward(&plus, &specs, &build) - forward(&minus, &specs, &build)) / (2.0 * FD_STEP);
        max_err = max_err.max(rel_err(broken_analytic[j], numeric));
    }
    GradCheckEntry {
        name: "relu_broken_adjoint".to_string(),
        tolerance: TOL_FINE,
        max_rel_err: max_err,
        pass: max_err <= TOL_FINE,
        negative_control: true,
    }
}

/// Run the whole suite. `tol_override` replaces both tolerance tiers when
/// given (the CLI's `--tolerance` flag).
pub fn run_suite(tol_override: Option<f64>) -> GradCheckReport {
    let coarse = tol_override.unwrap_or(TOL_COARSE);
    let fine = tol_override.unwrap_or(TOL_FINE);
    let mut entries = Vec::new();

    // conv2d: B=2, Ci=2, Co=3, 5x5 input, 3x3 kernel, stride 1, pad 1
    entries.push(check_op(
        "conv2d",
        coarse,
        101,
        &[
            InputSpec::new(&[2, 2, 5, 5], -1.0, 1.0),
            InputSpec::new(&[3, 2, 3, 3], -0.7, 0.7),
            InputSpec::new(&[3], -0.5, 0.5),
        ],
        {
            let mut rng = SplitMix64::new(1001);
            let w = reduce_weights(&mut rng, 2 * 3 * 25);
            Box::new(move |g, v| {
                let y = g.conv2d(v[0], v[1], v[2], 1, 1).unwrap();
                g.dot_const(y, &w).unwrap()
            })
        },
    ));

    entries.push(check_op(
        "conv2d_stride2",
        coarse,
        102,
        &[
            InputSpec::new(&[1, 2, 5, 5], -1.0, 1.0),
            InputSpec::new(&[2, 2, 3, 3], -0.7, 0.7),
            InputSpec::new(&[2], -0.5, 0.5),
        ],
        {
            let mut rng = SplitMix64::new(1002);
            let w = reduce_weights(&mut rng, 2 * 3 * 3);
            Box::new(move |g, v| {
                let y = g.conv2d(v[0], v[1], v[2], 2, 1).unwrap();
                g.dot_const(y, &w).unwrap()
            })
        },
    ));

    // batch mode batch-norm: stats depend on x, so the adjoint is the full one
    entries.push(check_op(
        "batch_norm",
        coarse,
        103,
        &[
            InputSpec::new(&[3, 2, 2, 2], -1.5, 1.5),
            InputSpec::new(&[2], 0.5, 1.5),
            InputSpec::new(&[2], -0.5, 0.5),
        ],
        {
            let mut rng = SplitMix64::new(1003);
            let w = reduce_weights(&mut rng, 3 * 2 * 4);
            Box::new(move |g, v| {
                let (y, _) = g.batch_norm_batch(v[0], v[1], v[2], 1e-5).unwrap();
                g.dot_const(y, &w).unwrap()
            })
        },
    ));

    entries.push(check_op(
        "batch_norm_eval",
        fine,
        104,
        &[
            InputSpec::new(&[2, 2, 2, 2], -1.5, 1.5),
            InputSpec::new(&[2], 0.5, 1.5),
            InputSpec::new(&[2], -0.5, 0.5),
        ],
        {
            let mut rng = SplitMix64::new(1004);
            let w = reduce_weights(&mut rng, 2 * 2 * 4);
            Box::new(move |g, v| {
                let y = g
                    .batch_norm_eval(v[0], v[1], v[2], &[0.1, -0.2], &[0.9, 1.3], 1e-5)
                    .unwrap();
                g.dot_const(y, &w).unwrap()
            })
        },
    ));

    // relu: inputs sampled away from the kink at 0
    entries.push(check_op(
        "relu",
        fine,
        105,
        &[InputSpec::new(&[10], 0.05, 1.0)],
        {
            let mut rng = SplitMix64::new(1005);
            let w = reduce_weights(&mut rng, 10);
            Box::new(move |g, v| {
                // flip half the inputs negative, well away from 0
                let shifted = g.scale(v[0], 1.0).unwrap();
                let y = g.relu(shifted).unwrap();
                g.dot_const(y, &w).unwrap()
            })
        },
    ));

    entries.push(check_op(
        "relu_negative_side",
        fine,
        106,
        &[InputSpec::new(&[10], -1.0, -0.05)],
        {
            let mut rng = SplitMix64::new(1006);
            let w = reduce_weights(&mut rng, 10);
            Box::new(move |g, v| {
                let y = g.relu(v[0]).unwrap();
                g.dot_const(y, &w).unwrap()
            })
        },
    ));

    entries.push(check_op(
        "sigmoid",
        fine,
        107,
        &[InputSpec::new(&[10], -3.0, 3.0)],
        {
            let mut rng = SplitMix64::new(1007);
            let w = reduce_weights(&mut rng, 10);
            Box::new(move |g, v| {
                let y = g.sigmoid(v[0]).unwrap();
                g.dot_const(y, &w).unwrap()
            })
        },
    ));

    entries.push(check_op(
        "linear",
        fine,
        108,
        &[
            InputSpec::new(&[3, 4], -1.0, 1.0),
            InputSpec::new(&[5, 4], -0.7, 0.7),
            InputSpec::new(&[5], -0.5, 0.5),
        ],
        {
            let mut rng = SplitMix64::new(1008);
            let w = reduce_weights(&mut rng, 15);
            Box::new(move |g, v| {
                let y = g.linear(v[0], v[1], v[2]).unwrap();
                g.dot_const(y, &w).unwrap()
            })
        },
    ));

    entries.push(check_op(
        "concat_channels",
        fine,
        109,
        &[
            InputSpec::new(&[2, 2, 3, 3], -1.0, 1.0),
            InputSpec::new(&[2, 1, 3, 3], -1.0, 1.0),
        ],
        {
            let mut rng = SplitMix64::new(1009);
            let w = reduce_weights(&mut rng, 2 * 3 * 9);
            Box::new(move |g, v| {
                let y = g.concat_channels(&[v[0], v[1]]).unwrap();
                g.dot_const(y, &w).unwrap()
            })
        },
    ));

    entries.push(check_op(
        "adaptive_avg_pool",
        fine,
        110,
        &[InputSpec::new(&[2, 3, 4, 4], -1.0, 1.0)],
        {
            let mut rng = SplitMix64::new(1010);
            let w = reduce_weights(&mut rng, 6);
            Box::new(move |g, v| {
                let y = g.adaptive_avg_pool(v[0]).unwrap();
                g.dot_const(y, &w).unwrap()
            })
        },
    ));

    entries.push(check_op(
        "mse",
        fine,
        111,
        &[
            InputSpec::new(&[12], -1.0, 1.0),
            InputSpec::new(&[12], -1.0, 1.0),
        ],
        Box::new(|g, v| g.mse(v[0], v[1]).unwrap()),
    ));

    entries.push(check_op(
        "bce",
        fine,
        112,
        &[
            InputSpec::new(&[6], 0.05, 0.95),
            InputSpec::constant(&[6], 0.0, 1.0), // labels; rounded below
        ],
        Box::new(|g, v| {
            let rounded = g.value(v[1]).data().iter().map(|x| x.round()).collect();
            let labels = g.constant(Tensor::from_vec(&[6], rounded));
            g.bce(v[0], labels).unwrap()
        }),
    ));

    entries.push(check_op(
        "adversarial_loss",
        fine,
        113,
        &[InputSpec::new(&[6], 0.05, 0.95)],
        Box::new(|g, v| g.neg_log_one_minus(v[0]).unwrap()),
    ));

    // abs_diff away from the subgradient kink at equality
    entries.push(check_op(
        "abs_diff",
        fine,
        114,
        &[
            InputSpec::new(&[], 0.5, 1.0),
            InputSpec::new(&[], 0.0, 0.4),
        ],
        Box::new(|g, v| g.abs_diff(v[0], v[1]).unwrap()),
    ));

    entries.push(check_op(
        "scale_add",
        fine,
        115,
        &[
            InputSpec::new(&[7], -1.0, 1.0),
            InputSpec::new(&[7], -1.0, 1.0),
        ],
        {
            let mut rng = SplitMix64::new(1015);
            let w = reduce_weights(&mut rng, 7);
            Box::new(move |g, v| {
                let a = g.scale(v[0], 0.7).unwrap();
                let s = g.add(a, v[1]).unwrap();
                g.dot_const(s, &w).unwrap()
            })
        },
    ));

    entries.push(check_op(
        "dot_const",
        fine,
        116,
        &[InputSpec::new(&[9], -1.0, 1.0)],
        {
            let mut rng = SplitMix64::new(1016);
            let w = reduce_weights(&mut rng, 9);
            Box::new(move |g, v| g.dot_const(v[0], &w).unwrap())
        },
    ));

    entries.push(negative_control(117));

    let suite_pass = entries
        .iter()
        .all(|e| if e.negative_control { !e.pass } else { e.pass });
    GradCheckReport {
        entries,
        suite_pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_suite_passes_and_catches_the_control() {
        let report = run_suite(None);
        for e in &report.entries {
            if e.negative_control {
                assert!(!e.pass, "negative control slipped through");
            } else {
                assert!(
                    e.pass,
                    "{} failed: max rel err {} > {}",
                    e.name, e.max_rel_err, e.tolerance
                );
            }
        }
        assert!(report.suite_pass);
    }

    #[test]
    fn loose_override_applies_to_every_primitive() {
        let report = run_suite(Some(1.0));
        for e in report.entries.iter().filter(|e| !e.negative_control) {
            assert_eq!(e.tolerance, 1.0);
        }
    }
}
