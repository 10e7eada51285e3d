//! Central-difference verification of the analytic gradients.
//!
//! Everything runs in f64. The numeric side only ever calls forward
//! functions, so it is independent of the backward code it judges. Layers
//! are probed coordinate by coordinate through a random linear functional
//! of their output; the full stack is probed on sampled scalar parameters
//! through the real cross-entropy loss.
//!
//! The network is piecewise linear in its ReLU and pooling selections, and
//! a gradient is only defined within one piece. The full-stack probes
//! therefore hold every data-dependent selection (dropout mask, ReLU
//! keeps, pool argmaxes) fixed at the base point: a parameter of the first
//! conv layer influences on the order of a million downstream activations,
//! so at any usable step size some pre-activation always sits close enough
//! to zero for the probe to push it across, and the difference quotient
//! would measure the jump between pieces rather than the derivative of
//! either. Pinning the selections makes the probed function smooth and
//! equal, around the base point, to the one `backward` differentiates.

use crate::error::Result;
use crate::layers::{BatchNorm, Conv2d, Dense, Dropout, MaxPool2x2};
use crate::loss::crossentropy_from_logits;
use crate::model::{Model, ModelConfig};
use crate::rng::Rng;
use crate::tensor::{uniform, Tensor};

pub const STEP: f64 = 1e-5;
pub const LAYER_TOL: f64 = 1e-5;
pub const STACK_TOL: f64 = 1e-4;

/// Deliberate corruption of one analytic gradient, used to prove the
/// checker actually detects broken backward passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    None,
    /// scales the first conv layer's analytic weight gradient
    ConvBackward,
}

/// |a-n| / max(|a|,|n|), with tiny absolute differences forgiven so exact
/// zeros compared against rounding noise do not read as 100% error.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= 1e-9 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs())
}

/// Worst relative error between `analytic` and central differences of
/// `loss` over every coordinate of `x`.
pub fn max_rel_err_over_inputs(
    loss: &mut dyn FnMut(&Tensor<f64>) -> f64,
    x: &Tensor<f64>,
    analytic: &[f64],
    h: f64,
) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x.data()[i];
        let mut probe = x.clone();
        probe.data_mut()[i] = orig + h;
        let up = loss(&probe);
        probe.data_mut()[i] = orig - h;
        let down = loss(&probe);
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(rel_err(analytic[i], numeric));
    }
    worst
}

/// One layer's verdict: the worst error over every checked coordinate of
/// every gradient the layer produces.
#[derive(Debug, Clone)]
pub struct LayerCheck {
    pub name: &'static str,
    pub max_rel_err: f64,
}

fn functional(rng: &mut Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.next_f64() * 2.0 - 1.0).collect()
}

fn dot(r: &[f64], y: &[f64]) -> f64 {
    r.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn check_conv(rng: &mut Rng) -> LayerCheck {
    let conv = Conv2d::<f64>::new(&mut rng.fork("conv/init"), 3, 3, 3, 4, true);
    let x = uniform(&mut rng.fork("conv/x"), -1.0, 1.0, &[2, 5, 5, 3]).unwrap();
    let (y, cache) = conv.forward(&x).unwrap();
    let r = functional(&mut rng.fork("conv/r"), y.len());
    let g = Tensor::new(y.shape(), r.clone()).unwrap();
    let (dx, dw, db) = conv.backward(&cache, &g).unwrap();

    let mut err = max_rel_err_over_inputs(
        &mut |p| dot(&r, conv.forward_eval(p).unwrap().data()),
        &x,
        dx.data(),
        STEP,
    );
    err = err.max(max_rel_err_over_inputs(
        &mut |w| {
            let probe = Conv2d {
                weights: w.clone(),
                bias: conv.bias.clone(),
                relu: true,
            };
            dot(&r, probe.forward_eval(&x).unwrap().data())
        },
        &conv.weights,
        dw.data(),
        STEP,
    ));
    err = err.max(max_rel_err_over_inputs(
        &mut |b| {
            let probe = Conv2d {
                weights: conv.weights.clone(),
                bias: b.clone(),
                relu: true,
            };
            dot(&r, probe.forward_eval(&x).unwrap().data())
        },
        &conv.bias,
        db.data(),
        STEP,
    ));
    LayerCheck {
        name: "conv2d",
        max_rel_err: err,
    }
}

fn check_dense(rng: &mut Rng) -> LayerCheck {
    let dense = Dense::<f64>::new(&mut rng.fork("dense/init"), 6, 4, true);
    let x = uniform(&mut rng.fork("dense/x"), -1.0, 1.0, &[3, 6]).unwrap();
    let (y, cache) = dense.forward(&x).unwrap();
    let r = functional(&mut rng.fork("dense/r"), y.len());
    let g = Tensor::new(y.shape(), r.clone()).unwrap();
    let (dx, dw, db) = dense.backward(&cache, &g).unwrap();

    let mut err = max_rel_err_over_inputs(
        &mut |p| dot(&r, dense.forward_eval(p).unwrap().data()),
        &x,
        dx.data(),
        STEP,
    );
    err = err.max(max_rel_err_over_inputs(
        &mut |w| {
            let probe = Dense {
                weights: w.clone(),
                bias: dense.bias.clone(),
                relu: true,
            };
            dot(&r, probe.forward_eval(&x).unwrap().data())
        },
        &dense.weights,
        dw.data(),
        STEP,
    ));
    err = err.max(max_rel_err_over_inputs(
        &mut |b| {
            let probe = Dense {
                weights: dense.weights.clone(),
                bias: b.clone(),
                relu: true,
            };
            dot(&r, probe.forward_eval(&x).unwrap().data())
        },
        &dense.bias,
        db.data(),
        STEP,
    ));
    LayerCheck {
        name: "dense",
        max_rel_err: err,
    }
}

fn check_batchnorm(rng: &mut Rng) -> LayerCheck {
    let mut bn = BatchNorm::<f64>::new(3);
    // non-trivial scale and shift so their gradients are exercised
    bn.gamma = uniform(&mut rng.fork("bn/gamma"), 0.5, 1.5, &[3]).unwrap();
    bn.beta = uniform(&mut rng.fork("bn/beta"), -0.5, 0.5, &[3]).unwrap();
    let x = uniform(&mut rng.fork("bn/x"), -2.0, 2.0, &[6, 3]).unwrap();
    let (y, cache) = bn.forward_frozen(&x).unwrap();
    let r = functional(&mut rng.fork("bn/r"), y.len());
    let g = Tensor::new(y.shape(), r.clone()).unwrap();
    let (dx, dgamma, dbeta) = bn.backward(&cache, &g).unwrap();

    let mut err = max_rel_err_over_inputs(
        &mut |p| dot(&r, bn.forward_frozen(p).unwrap().0.data()),
        &x,
        dx.data(),
        STEP,
    );
    err = err.max(max_rel_err_over_inputs(
        &mut |gm| {
            let mut probe = BatchNorm::<f64>::new(3);
            probe.gamma = gm.clone();
            probe.beta = bn.beta.clone();
            dot(&r, probe.forward_frozen(&x).unwrap().0.data())
        },
        &bn.gamma,
        dgamma.data(),
        STEP,
    ));
    err = err.max(max_rel_err_over_inputs(
        &mut |bt| {
            let mut probe = BatchNorm::<f64>::new(3);
            probe.gamma = bn.gamma.clone();
            probe.beta = bt.clone();
            dot(&r, probe.forward_frozen(&x).unwrap().0.data())
        },
        &bn.beta,
        dbeta.data(),
        STEP,
    ));
    LayerCheck {
        name: "batchnorm",
        max_rel_err: err,
    }
}

/// Raise each 2x2 window's maximum by a margin far above the probe step,
/// so no finite-difference probe can flip an argmax.
fn separate_pool_maxima(x: &mut Tensor<f64>) {
    let [n, oh, ow, c] = MaxPool2x2::out_shape(x.shape()).unwrap();
    for ni in 0..n {
        for i in 0..oh {
            for j in 0..ow {
                for k in 0..c {
                    let mut best = (0usize, 0usize);
                    let mut best_v = f64::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let v = x.at(&[ni, 2 * i + dy, 2 * j + dx, k]);
                            if v > best_v {
                                best_v = v;
                                best = (dy, dx);
                            }
                        }
                    }
                    let idx = [ni, 2 * i + best.0, 2 * j + best.1, k];
                    x.set(&idx, best_v + 0.5);
                }
            }
        }
    }
}

fn check_maxpool(rng: &mut Rng) -> LayerCheck {
    let mut x = uniform(&mut rng.fork("pool/x"), -1.0, 1.0, &[2, 4, 6, 2]).unwrap();
    separate_pool_maxima(&mut x);
    let (y, cache) = MaxPool2x2::forward(&x).unwrap();
    let r = functional(&mut rng.fork("pool/r"), y.len());
    let g = Tensor::new(y.shape(), r.clone()).unwrap();
    let dx = MaxPool2x2::backward(&cache, &g).unwrap();
    let err = max_rel_err_over_inputs(
        &mut |p| dot(&r, MaxPool2x2::forward(p).unwrap().0.data()),
        &x,
        dx.data(),
        STEP,
    );
    LayerCheck {
        name: "maxpool2x2",
        max_rel_err: err,
    }
}

fn check_dropout(rng: &mut Rng) -> LayerCheck {
    let d = Dropout::new(0.2).unwrap();
    let x = uniform(&mut rng.fork("drop/x"), -1.0, 1.0, &[5, 4]).unwrap();
    let mask = d.draw_mask(&mut rng.fork("drop/mask"), x.len());
    let y = d.apply(&x, &mask).unwrap();
    let r = functional(&mut rng.fork("drop/r"), y.len());
    let g = Tensor::new(y.shape(), r.clone()).unwrap();
    let dx = d.backward(&g, &mask).unwrap();
    let err = max_rel_err_over_inputs(
        &mut |p| dot(&r, d.apply(p, &mask).unwrap().data()),
        &x,
        dx.data(),
        STEP,
    );
    LayerCheck {
        name: "dropout",
        max_rel_err: err,
    }
}

/// Every layer's gradients against central differences for one seed.
pub fn check_layers(seed: u64) -> Vec<LayerCheck> {
    let rng = Rng::new(seed);
    vec![
        check_conv(&mut rng.fork("layer/conv")),
        check_batchnorm(&mut rng.fork("layer/bn")),
        check_dense(&mut rng.fork("layer/dense")),
        check_maxpool(&mut rng.fork("layer/pool")),
        check_dropout(&mut rng.fork("layer/dropout")),
    ]
}

#[derive(Debug, Clone)]
pub struct StackCheck {
    pub seed: u64,
    pub sampled: usize,
    pub max_rel_err: f64,
}

/// Full-network check: batch 2 through the real model and loss, comparing
/// analytic gradients on sampled scalar parameters against central
/// differences of the selection-pinned forward (see the module docs).
pub fn check_full_stack(seed: u64, samples: usize, fault: Fault) -> Result<StackCheck> {
    let origin = Rng::new(seed);
    let mut model = Model::<f64>::build(ModelConfig::with_classes(5), &origin.fork("model"))?;
    let x = uniform(&mut origin.fork("input"), 0.0, 1.0, &[2, 50, 50, 3])?;
    let labels = [seed as usize % 5, (seed as usize + 3) % 5];
    let mask = model
        .drop
        .draw_mask(&mut origin.fork("dropout"), model.mask_len(2));

    let (logits, cache) = model.forward_frozen(&x, &mask)?;
    let (_, grad_logits) = crossentropy_from_logits(&logits, &labels)?;
    let mut grads = model.backward(&cache, &grad_logits)?;
    if fault == Fault::ConvBackward {
        // silently wrong by 1%: exactly the class of bug this must catch
        grads.tensors[0] = grads.tensors[0].scale(1.01);
    }

    // cycle the tensors so every layer's gradient is probed, with the
    // coordinate inside each tensor drawn at random
    let mut pick = origin.fork("sample");
    let shapes: Vec<usize> = grads.tensors.iter().map(|t| t.len()).collect();
    let mut worst = 0.0f64;
    for s in 0..samples {
        let ti = s % shapes.len();
        let ci = pick.next_index(shapes[ti]);
        let analytic = grads.tensors[ti].data()[ci];

        let orig = model.trainable_params_mut()[ti].data()[ci];
        let mut eval_at = |v: f64| -> Result<f64> {
            model.trainable_params_mut()[ti].data_mut()[ci] = v;
            let logits = model.forward_replay(&x, &cache)?;
            let (loss, _) = crossentropy_from_logits(&logits, &labels)?;
            Ok(loss)
        };
        let up = eval_at(orig + STEP)?;
        let down = eval_at(orig - STEP)?;
        model.trainable_params_mut()[ti].data_mut()[ci] = orig;

        let numeric = (up - down) / (2.0 * STEP);
        worst = worst.max(rel_err(analytic, numeric));
    }
    Ok(StackCheck {
        seed,
        sampled: samples,
        max_rel_err: worst,
    })
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub layers: Vec<(u64, Vec<LayerCheck>)>,
    pub stacks: Vec<StackCheck>,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.layers
            .iter()
            .all(|(_, checks)| checks.iter().all(|c| c.max_rel_err < LAYER_TOL))
            && self.stacks.iter().all(|s| s.max_rel_err < STACK_TOL)
    }
}

/// The whole verification suite: per-layer checks and a 20-parameter
/// full-stack check for each seed.
pub fn run_suite(seeds: &[u64], fault: Fault) -> Result<SuiteReport> {
    let mut report = SuiteReport {
        layers: Vec::new(),
        stacks: Vec::new(),
    };
    for &seed in seeds {
        report.layers.push((seed, check_layers(seed)));
        report.stacks.push(check_full_stack(seed, 20, fault)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rel_err_behaves() {
        assert_eq!(rel_err(1.0, 1.0), 0.0);
        assert!(rel_err(1.0, 1.1) > 0.09);
        // absolute bailout: both sides indistinguishable from zero
        assert_eq!(rel_err(0.0, 1e-12), 0.0);
        assert!(rel_err(0.0, 1e-3) == 1.0);
    }

    #[test]
    fn every_layer_passes_at_the_layer_tolerance() {
        for seed in [1, 2, 3] {
            for check in check_layers(seed) {
                assert!(
                    check.max_rel_err < LAYER_TOL,
                    "seed {seed} layer {} err {}",
                    check.name,
                    check.max_rel_err
                );
            }
        }
    }

    #[test]
    fn injected_conv_fault_is_caught() {
        let clean = check_full_stack(11, 40, Fault::None).unwrap();
        let broken = check_full_stack(11, 40, Fault::ConvBackward).unwrap();
        assert!(clean.max_rel_err < STACK_TOL, "clean err {}", clean.max_rel_err);
        assert!(
            broken.max_rel_err > STACK_TOL,
            "fault went undetected: err {}",
            broken.max_rel_err
        );
    }
}
