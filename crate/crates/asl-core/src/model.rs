//! The 13-layer classifier: stack assembly, whole-network forward and
//! backward, parameter accounting, and weight serialization.
//!
//! Layer order is fixed: Input, Conv(32), BatchNorm, Conv(64), Conv(128),
//! MaxPool, Dropout, BatchNorm, Conv(256), MaxPool, Flatten, Dense(64),
//! Dense(num_classes). Every conv and the first dense carry a fused ReLU;
//! the final dense produces logits and `probs_eval` puts a softmax on top.

use crate::error::{Error, Result};
use crate::layers::{
    BatchNorm, BnCache, Conv2d, ConvCache, Dense, DenseCache, Dropout, MaxPool2x2, PoolCache,
};
use crate::loss::softmax;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_h: usize,
    pub input_w: usize,
    pub input_c: usize,
    pub conv_filters: [usize; 4],
    pub kernel: usize,
    pub dense_units: usize,
    pub num_classes: usize,
    pub dropout_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_h: 50,
            input_w: 50,
            input_c: 3,
            conv_filters: [32, 64, 128, 256],
            kernel: 3,
            dense_units: 64,
            num_classes: 29,
            dropout_rate: 0.2,
        }
    }
}

impl ModelConfig {
    pub fn with_classes(num_classes: usize) -> Self {
        ModelConfig {
            num_classes,
            ..ModelConfig::default()
        }
    }
}

/// Spatial dims after each stage, computed once at build time.
#[derive(Debug, Clone)]
struct StackShapes {
    c1: [usize; 3],
    c2: [usize; 3],
    c3: [usize; 3],
    p1: [usize; 3],
    c4: [usize; 3],
    p2: [usize; 3],
    flat: usize,
}

pub struct Model<T> {
    pub cfg: ModelConfig,
    pub conv1: Conv2d<T>,
    pub bn1: BatchNorm<T>,
    pub conv2: Conv2d<T>,
    pub conv3: Conv2d<T>,
    pub drop: Dropout,
    pub bn2: BatchNorm<T>,
    pub conv4: Conv2d<T>,
    pub dense1: Dense<T>,
    pub dense2: Dense<T>,
    shapes: StackShapes,
}

/// Everything one training forward leaves behind for backward.
pub struct ModelCache<T> {
    batch: usize,
    c1: ConvCache<T>,
    b1: BnCache<T>,
    c2: ConvCache<T>,
    c3: ConvCache<T>,
    p1: PoolCache,
    pub mask: Vec<u8>,
    b2: BnCache<T>,
    c4: ConvCache<T>,
    p2: PoolCache,
    d1: DenseCache<T>,
    d2: DenseCache<T>,
}

/// Gradients for the 16 trainable tensors, in `trainable_names` order.
pub struct Gradients<T> {
    pub tensors: Vec<Tensor<T>>,
}

fn conv_shrink(hw: [usize; 3], kernel: usize, filters: usize) -> Result<[usize; 3]> {
    let [h, w, _] = hw;
    if h < kernel || w < kernel {
        return Err(Error::Config(format!(
            "stage input {h}x{w} is smaller than the {kernel}x{kernel} kernel"
        )));
    }
    Ok([h - kernel + 1, w - kernel + 1, filters])
}

fn pool_shrink(hw: [usize; 3]) -> Result<[usize; 3]> {
    let [h, w, c] = hw;
    if h < 2 || w < 2 {
        return Err(Error::Config(format!(
            "stage input {h}x{w} is smaller than the 2x2 pooling window"
        )));
    }
    Ok([h / 2, w / 2, c])
}

impl ModelConfig {
    fn stack_shapes(&self) -> Result<StackShapes> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.kernel == 0 || self.dense_units == 0 || self.conv_filters.iter().any(|&f| f == 0) {
            return Err(Error::Config("layer widths must be at least 1".into()));
        }
        let [f1, f2, f3, f4] = self.conv_filters;
        let c1 = conv_shrink([self.input_h, self.input_w, self.input_c], self.kernel, f1)?;
        let c2 = conv_shrink(c1, self.kernel, f2)?;
        let c3 = conv_shrink(c2, self.kernel, f3)?;
        let p1 = pool_shrink(c3)?;
        let c4 = conv_shrink(p1, self.kernel, f4)?;
        let p2 = pool_shrink(c4)?;
        Ok(StackShapes {
            c1,
            c2,
            c3,
            p1,
            c4,
            p2,
            flat: p2[0] * p2[1] * p2[2],
        })
    }
}

impl<T: Scalar> Model<T> {
    /// Construct the stack with Glorot-uniform weights, zero biases, and
    /// fresh batch-norm state. Each layer initializes from its own named
    /// fork of `origin`, so two builds from equal seeds are bitwise equal.
    pub fn build(cfg: ModelConfig, origin: &Rng) -> Result<Self> {
        let shapes = cfg.stack_shapes()?;
        let k = cfg.kernel;
        let [f1, f2, f3, f4] = cfg.conv_filters;
        let drop = Dropout::new(cfg.dropout_rate)?;
        Ok(Model {
            conv1: Conv2d::new(&mut origin.fork("init/conv1"), k, k, cfg.input_c, f1, true),
            bn1: BatchNorm::new(f1),
            conv2: Conv2d::new(&mut origin.fork("init/conv2"), k, k, f1, f2, true),
            conv3: Conv2d::new(&mut origin.fork("init/conv3"), k, k, f2, f3, true),
            drop,
            bn2: BatchNorm::new(f3),
            conv4: Conv2d::new(&mut origin.fork("init/conv4"), k, k, f3, f4, true),
            dense1: Dense::new(&mut origin.fork("init/dense1"), shapes.flat, cfg.dense_units, true),
            dense2: Dense::new(
                &mut origin.fork("init/dense2"),
                cfg.dense_units,
                cfg.num_classes,
                false,
            ),
            shapes,
            cfg,
        })
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<usize> {
        let want = [self.cfg.input_h, self.cfg.input_w, self.cfg.input_c];
        match *x.shape() {
            [n, h, w, c] if [h, w, c] == want => Ok(n),
            _ => Err(Error::shape(format!(
                "model expects input [N, {}, {}, {}], got {:?}",
                want[0],
                want[1],
                want[2],
                x.shape()
            ))),
        }
    }

    /// Number of dropout mask entries a batch of `n` needs.
    pub fn mask_len(&self, n: usize) -> usize {
        let [h, w, c] = self.shapes.p1;
        n * h * w * c
    }

    /// Training forward: batch statistics drive the batch-norm layers and
    /// are folded into their moving averages, and a fresh dropout mask is
    /// drawn from `rng`. Returns logits.
    pub fn forward_train(&mut self, x: &Tensor<T>, rng: &mut Rng) -> Result<(Tensor<T>, ModelCache<T>)> {
        let n = self.check_input(x)?;
        let mask = self.drop.draw_mask(rng, self.mask_len(n));
        let (a1, c1) = self.conv1.forward(x)?;
        let (a2, b1) = self.bn1.forward_train(&a1)?;
        drop(a1);
        let (a3, c2) = self.conv2.forward(&a2)?;
        drop(a2);
        let (a4, c3) = self.conv3.forward(&a3)?;
        drop(a3);
        let (a5, p1) = MaxPool2x2::forward(&a4)?;
        drop(a4);
        let a6 = self.drop.apply(&a5, &mask)?;
        drop(a5);
        let (a7, b2) = self.bn2.forward_train(&a6)?;
        drop(a6);
        let (a8, c4) = self.conv4.forward(&a7)?;
        drop(a7);
        let (a9, p2) = MaxPool2x2::forward(&a8)?;
        drop(a8);
        let flat = a9.reshape(&[n, self.shapes.flat])?;
        drop(a9);
        let (a10, d1) = self.dense1.forward(&flat)?;
        let (logits, d2) = self.dense2.forward(&a10)?;
        Ok((
            logits,
            ModelCache {
                batch: n,
                c1,
                b1,
                c2,
                c3,
                p1,
                mask,
                b2,
                c4,
                p2,
                d1,
                d2,
            },
        ))
    }

    /// Training-mode math with a caller-supplied dropout mask and no
    /// moving-average side effects. `backward` is the exact adjoint of this
    /// function at the point it was evaluated.
    pub fn forward_frozen(&self, x: &Tensor<T>, mask: &[u8]) -> Result<(Tensor<T>, ModelCache<T>)> {
        let n = self.check_input(x)?;
        if mask.len() != self.mask_len(n) {
            return Err(Error::shape(format!(
                "dropout mask has {} entries, batch of {n} needs {}",
                mask.len(),
                self.mask_len(n)
            )));
        }
        let (a1, c1) = self.conv1.forward(x)?;
        let (a2, b1) = self.bn1.forward_frozen(&a1)?;
        let (a3, c2) = self.conv2.forward(&a2)?;
        let (a4, c3) = self.conv3.forward(&a3)?;
        let (a5, p1) = MaxPool2x2::forward(&a4)?;
        let a6 = self.drop.apply(&a5, mask)?;
        let (a7, b2) = self.bn2.forward_frozen(&a6)?;
        let (a8, c4) = self.conv4.forward(&a7)?;
        let (a9, p2) = MaxPool2x2::forward(&a8)?;
        let flat = a9.reshape(&[n, self.shapes.flat])?;
        let (a10, d1) = self.dense1.forward(&flat)?;
        let (logits, d2) = self.dense2.forward(&a10)?;
        Ok((
            logits,
            ModelCache {
                batch: n,
                c1,
                b1,
                c2,
                c3,
                p1,
                mask: mask.to_vec(),
                b2,
                c4,
                p2,
                d1,
                d2,
            },
        ))
    }

    /// Forward along the piecewise-linear region of a cached pass: every
    /// data-dependent selection (ReLU keeps, pool argmaxes, dropout mask)
    /// is replayed from `cache` instead of recomputed, while everything
    /// smooth (convolutions, batch statistics, dense products) is evaluated
    /// fresh. At the cached point this equals `forward_frozen`; nearby it
    /// is the differentiable function whose exact derivative `backward`
    /// computes, so finite differences of it converge instead of tripping
    /// over selection flips.
    pub fn forward_replay(&self, x: &Tensor<T>, cache: &ModelCache<T>) -> Result<Tensor<T>> {
        let n = self.check_input(x)?;
        if n != cache.batch {
            return Err(Error::shape(format!(
                "replay batch {n} does not match cached batch {}",
                cache.batch
            )));
        }
        let a1 = self.conv1.forward_replay(x, &cache.c1)?;
        let a2 = self.bn1.forward_frozen(&a1)?.0;
        let a3 = self.conv2.forward_replay(&a2, &cache.c2)?;
        let a4 = self.conv3.forward_replay(&a3, &cache.c3)?;
        let a5 = MaxPool2x2::forward_replay(&a4, &cache.p1)?;
        let a6 = self.drop.apply(&a5, &cache.mask)?;
        let a7 = self.bn2.forward_frozen(&a6)?.0;
        let a8 = self.conv4.forward_replay(&a7, &cache.c4)?;
        let a9 = MaxPool2x2::forward_replay(&a8, &cache.p2)?;
        let flat = a9.reshape(&[n, self.shapes.flat])?;
        let a10 = self.dense1.forward_replay(&flat, &cache.d1)?;
        self.dense2.forward_replay(&a10, &cache.d2)
    }

    /// Inference forward: moving statistics, no dropout. Returns logits.
    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.check_input(x)?;
        let a = self.conv1.forward_eval(x)?;
        let a = self.bn1.forward_eval(&a)?;
        let a = self.conv2.forward_eval(&a)?;
        let a = self.conv3.forward_eval(&a)?;
        let (a, _) = MaxPool2x2::forward(&a)?;
        let a = self.bn2.forward_eval(&a)?;
        let a = self.conv4.forward_eval(&a)?;
        let (a, _) = MaxPool2x2::forward(&a)?;
        let a = a.reshape(&[n, self.shapes.flat])?;
        let a = self.dense1.forward_eval(&a)?;
        self.dense2.forward_eval(&a)
    }

    /// Inference class probabilities: softmax over `forward_eval` logits.
    pub fn probs_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        softmax(&self.forward_eval(x)?)
    }

    /// Chain rule over the whole stack. `grad_logits` is the loss gradient
    /// at the final dense output (for fused cross-entropy that is
    /// `(probs - one_hot) / batch`).
    pub fn backward(&self, cache: &ModelCache<T>, grad_logits: &Tensor<T>) -> Result<Gradients<T>> {
        let n = cache.batch;
        let (g, dw_d2, db_d2) = self.dense2.backward(&cache.d2, grad_logits)?;
        let (g, dw_d1, db_d1) = self.dense1.backward(&cache.d1, &g)?;
        let [h2, w2, ch2] = self.shapes.p2;
        let g = g.reshape(&[n, h2, w2, ch2])?;
        let g = MaxPool2x2::backward(&cache.p2, &g)?;
        let (g, dw_c4, db_c4) = self.conv4.backward(&cache.c4, &g)?;
        let (g, dgamma2, dbeta2) = self.bn2.backward(&cache.b2, &g)?;
        let g = self.drop.backward(&g, &cache.mask)?;
        let g = MaxPool2x2::backward(&cache.p1, &g)?;
        let (g, dw_c3, db_c3) = self.conv3.backward(&cache.c3, &g)?;
        let (g, dw_c2, db_c2) = self.conv2.backward(&cache.c2, &g)?;
        let (g, dgamma1, dbeta1) = self.bn1.backward(&cache.b1, &g)?;
        let (_, dw_c1, db_c1) = self.conv1.backward(&cache.c1, &g)?;
        Ok(Gradients {
            tensors: vec![
                dw_c1, db_c1, dgamma1, dbeta1, dw_c2, db_c2, dw_c3, db_c3, dgamma2, dbeta2,
                dw_c4, db_c4, dw_d1, db_d1, dw_d2, db_d2,
            ],
        })
    }

    /// The 16 trainable tensors, fixed order, paired with `Gradients`.
    pub fn trainable_params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![
            &mut self.conv1.weights,
            &mut self.conv1.bias,
            &mut self.bn1.gamma,
            &mut self.bn1.beta,
            &mut self.conv2.weights,
            &mut self.conv2.bias,
            &mut self.conv3.weights,
            &mut self.conv3.bias,
            &mut self.bn2.gamma,
            &mut self.bn2.beta,
            &mut self.conv4.weights,
            &mut self.conv4.bias,
            &mut self.dense1.weights,
            &mut self.dense1.bias,
            &mut self.dense2.weights,
            &mut self.dense2.bias,
        ]
    }

    pub fn trainable_names() -> [&'static str; 16] {
        [
            "conv1/weights",
            "conv1/bias",
            "bn1/gamma",
            "bn1/beta",
            "conv2/weights",
            "conv2/bias",
            "conv3/weights",
            "conv3/bias",
            "bn2/gamma",
            "bn2/beta",
            "conv4/weights",
            "conv4/bias",
            "dense1/weights",
            "dense1/bias",
            "dense2/weights",
            "dense2/bias",
        ]
    }

    /// All 20 persisted tensors in serialization order: the trainable set
    /// plus the batch-norm moving statistics, laid out layer by layer.
    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor<T>)> {
        vec![
            ("conv1/weights", &self.conv1.weights),
            ("conv1/bias", &self.conv1.bias),
            ("bn1/gamma", &self.bn1.gamma),
            ("bn1/beta", &self.bn1.beta),
            ("bn1/moving_mean", &self.bn1.moving_mean),
            ("bn1/moving_var", &self.bn1.moving_var),
            ("conv2/weights", &self.conv2.weights),
            ("conv2/bias", &self.conv2.bias),
            ("conv3/weights", &self.conv3.weights),
            ("conv3/bias", &self.conv3.bias),
            ("bn2/gamma", &self.bn2.gamma),
            ("bn2/beta", &self.bn2.beta),
            ("bn2/moving_mean", &self.bn2.moving_mean),
            ("bn2/moving_var", &self.bn2.moving_var),
            ("conv4/weights", &self.conv4.weights),
            ("conv4/bias", &self.conv4.bias),
            ("dense1/weights", &self.dense1.weights),
            ("dense1/bias", &self.dense1.bias),
            ("dense2/weights", &self.dense2.weights),
            ("dense2/bias", &self.dense2.bias),
        ]
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        vec![
            ("conv1/weights", &mut self.conv1.weights),
            ("conv1/bias", &mut self.conv1.bias),
            ("bn1/gamma", &mut self.bn1.gamma),
            ("bn1/beta", &mut self.bn1.beta),
            ("bn1/moving_mean", &mut self.bn1.moving_mean),
            ("bn1/moving_var", &mut self.bn1.moving_var),
            ("conv2/weights", &mut self.conv2.weights),
            ("conv2/bias", &mut self.conv2.bias),
            ("conv3/weights", &mut self.conv3.weights),
            ("conv3/bias", &mut self.conv3.bias),
            ("bn2/gamma", &mut self.bn2.gamma),
            ("bn2/beta", &mut self.bn2.beta),
            ("bn2/moving_mean", &mut self.bn2.moving_mean),
            ("bn2/moving_var", &mut self.bn2.moving_var),
            ("conv4/weights", &mut self.conv4.weights),
            ("conv4/bias", &mut self.conv4.bias),
            ("dense1/weights", &mut self.dense1.weights),
            ("dense1/bias", &mut self.dense1.bias),
            ("dense2/weights", &mut self.dense2.weights),
            ("dense2/bias", &mut self.dense2.bias),
        ]
    }

    pub fn param_counts(&self) -> ParamCounts {
        let total: usize = self.named_tensors().iter().map(|(_, t)| t.len()).sum();
        let non_trainable = 2 * (self.bn1.channels() + self.bn2.channels());
        ParamCounts {
            total,
            trainable: total - non_trainable,
            non_trainable,
        }
    }

    /// One row per architecture stage, matching the layer-table layout:
    /// name, per-sample output shape, parameter count (moving statistics
    /// included in the batch-norm rows).
    pub fn summary(&self) -> Vec<SummaryRow> {
        let s = &self.shapes;
        let row = |name, shape: &[usize], params| SummaryRow {
            name,
            shape: shape.to_vec(),
            params,
        };
        let bn_params = |c: usize| 4 * c;
        vec![
            row(
                "Input layer",
                &[self.cfg.input_h, self.cfg.input_w, self.cfg.input_c],
                0,
            ),
            row("Conv2D", &s.c1, self.conv1.weights.len() + self.conv1.bias.len()),
            row("Batch Normalization", &s.c1, bn_params(self.bn1.channels())),
            row("Conv2D", &s.c2, self.conv2.weights.len() + self.conv2.bias.len()),
            row("Conv2D", &s.c3, self.conv3.weights.len() + self.conv3.bias.len()),
            row("MaxPooling2D", &s.p1, 0),
            row("Dropout", &s.p1, 0),
            row("Batch Normalization", &s.p1, bn_params(self.bn2.channels())),
            row("Conv2D", &s.c4, self.conv4.weights.len() + self.conv4.bias.len()),
            row("MaxPooling2D", &s.p2, 0),
            row("Flatten", &[s.flat], 0),
            row(
                "Dense",
                &[self.cfg.dense_units],
                self.dense1.weights.len() + self.dense1.bias.len(),
            ),
            row(
                "Dense",
                &[self.cfg.num_classes],
                self.dense2.weights.len() + self.dense2.bias.len(),
            ),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub name: &'static str,
    /// per-sample output shape (no batch dim)
    pub shape: Vec<usize>,
    pub params: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamCounts {
    pub total: usize,
    pub trainable: usize,
    pub non_trainable: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::crossentropy_from_logits;
    use crate::optim::{Optimizer, RmsPropHyper};
    use crate::tensor::uniform;

    fn small_input(n: usize, seed: u64) -> Tensor<f32> {
        let mut rng = Rng::new(seed);
        uniform(&mut rng, 0.0, 1.0, &[n, 50, 50, 3]).unwrap()
    }

    #[test]
    fn table_golden_num_classes_30() {
        let model = Model::<f32>::build(ModelConfig::with_classes(30), &Rng::new(1)).unwrap();
        let rows = model.summary();
        let expect: [(&str, &[usize], usize); 13] = [
            ("Input layer", &[50, 50, 3], 0),
            ("Conv2D", &[48, 48, 32], 896),
            ("Batch Normalization", &[48, 48, 32], 128),
            ("Conv2D", &[46, 46, 64], 18496),
            ("Conv2D", &[44, 44, 128], 73856),
            ("MaxPooling2D", &[22, 22, 128], 0),
            ("Dropout", &[22, 22, 128], 0),
            ("Batch Normalization", &[22, 22, 128], 512),
            ("Conv2D", &[20, 20, 256], 295168),
            ("MaxPooling2D", &[10, 10, 256], 0),
            ("Flatten", &[25600], 0),
            ("Dense", &[64], 1638464),
            ("Dense", &[30], 1950),
        ];
        assert_eq!(rows.len(), 13);
        for (row, (name, shape, params)) in rows.iter().zip(expect) {
            assert_eq!(row.name, name);
            assert_eq!(row.shape, shape);
            assert_eq!(row.params, params, "row {name}");
        }
        let counts = model.param_counts();
        assert_eq!(counts.total, 2_029_470);
        assert_eq!(counts.trainable, 2_029_150);
        assert_eq!(counts.non_trainable, 320);
    }

    #[test]
    fn default_config_has_29_class_head() {
        let model = Model::<f32>::build(ModelConfig::default(), &Rng::new(1)).unwrap();
        let last = model.summary().pop().unwrap();
        assert_eq!(last.shape, vec![29]);
        assert_eq!(last.params, 64 * 29 + 29);
        assert_eq!(last.params, 1885);
    }

    #[test]
    fn same_seed_builds_identical_weights() {
        let a = Model::<f32>::build(ModelConfig::default(), &Rng::new(7)).unwrap();
        let b = Model::<f32>::build(ModelConfig::default(), &Rng::new(7)).unwrap();
        for ((_, ta), (_, tb)) in a.named_tensors().iter().zip(b.named_tensors()) {
            assert_eq!(ta.data(), tb.data());
        }
        let c = Model::<f32>::build(ModelConfig::default(), &Rng::new(8)).unwrap();
        assert_ne!(a.conv1.weights.data(), c.conv1.weights.data());
    }

    #[test]
    fn incompatible_input_dims_are_a_config_error() {
        let cfg = ModelConfig {
            input_h: 7,
            input_w: 7,
            ..ModelConfig::default()
        };
        assert!(matches!(
            Model::<f32>::build(cfg, &Rng::new(1)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            Model::<f32>::build(ModelConfig::with_classes(1), &Rng::new(1)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn forward_shapes_and_probability_rows() {
        let mut model = Model::<f32>::build(ModelConfig::with_classes(30), &Rng::new(2)).unwrap();
        let x = small_input(2, 3);
        let probs = model.probs_eval(&x).unwrap();
        assert_eq!(probs.shape(), &[2, 30]);
        for row in probs.data().chunks_exact(30) {
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
        let (logits, _) = model
            .forward_train(&x, &mut Rng::new(4).fork("dropout"))
            .unwrap();
        assert_eq!(logits.shape(), &[2, 30]);
        assert!(model.forward_eval(&Tensor::zeros(&[2, 49, 50, 3])).is_err());
    }

    #[test]
    fn fresh_model_loss_is_near_ln_c() {
        // zero biases and Glorot weights keep early logits small, so the
        // loss starts within 10% of ln(num_classes)
        let model = Model::<f32>::build(ModelConfig::with_classes(30), &Rng::new(5)).unwrap();
        let x = small_input(4, 6);
        let logits = model.forward_eval(&x).unwrap();
        let (loss, _) = crossentropy_from_logits(&logits, &[0, 9, 17, 29]).unwrap();
        let ln_c = 30.0f64.ln();
        assert!((loss - ln_c).abs() < 0.1 * ln_c, "loss {loss} vs ln C {ln_c}");
    }

    #[test]
    fn eval_forward_is_repeatable() {
        let model = Model::<f32>::build(ModelConfig::default(), &Rng::new(9)).unwrap();
        let x = small_input(1, 10);
        let a = model.forward_eval(&x).unwrap();
        let b = model.forward_eval(&x).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_parameter_gradients() {
        let mut model = Model::<f32>::build(ModelConfig::with_classes(5), &Rng::new(11)).unwrap();
        let x = small_input(2, 12);
        let (logits, cache) = model.forward_train(&x, &mut Rng::new(13)).unwrap();
        let g = Tensor::zeros(logits.shape());
        let grads = model.backward(&cache, &g).unwrap();
        assert_eq!(grads.tensors.len(), 16);
        for t in &grads.tensors {
            assert!(t.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn gradient_tensors_align_with_trainable_params() {
        let mut model = Model::<f32>::build(ModelConfig::with_classes(5), &Rng::new(14)).unwrap();
        let x = small_input(2, 15);
        let (logits, cache) = model.forward_train(&x, &mut Rng::new(16)).unwrap();
        let (_, g) = crossentropy_from_logits(&logits, &[0, 3]).unwrap();
        let grads = model.backward(&cache, &g).unwrap();
        let shapes: Vec<Vec<usize>> = grads.tensors.iter().map(|t| t.shape().to_vec()).collect();
        for (param, shape) in model.trainable_params_mut().iter().zip(&shapes) {
            assert_eq!(param.shape(), &shape[..]);
        }
    }

    #[test]
    fn replay_equals_the_frozen_forward_at_the_cached_point() {
        let model = Model::<f32>::build(ModelConfig::with_classes(4), &Rng::new(23)).unwrap();
        let x = small_input(2, 24);
        let mask = model.drop.draw_mask(&mut Rng::new(25), model.mask_len(2));
        let (logits, cache) = model.forward_frozen(&x, &mask).unwrap();
        let replay = model.forward_replay(&x, &cache).unwrap();
        assert_eq!(replay, logits);
    }

    #[test]
    fn one_small_rmsprop_step_decreases_the_batch_loss() {
        let mut model = Model::<f32>::build(ModelConfig::with_classes(5), &Rng::new(17)).unwrap();
        let x = small_input(4, 18);
        let labels = [0, 1, 2, 3];
        let mask_rng = Rng::new(19);
        let (logits, cache) = model
            .forward_train(&x, &mut mask_rng.fork("dropout/step"))
            .unwrap();
        let (loss_before, g) = crossentropy_from_logits(&logits, &labels).unwrap();
        let grads = model.backward(&cache, &g).unwrap();
        // With its accumulator empty, the first RMSProp step moves every
        // coordinate by about lr/sqrt(1-rho) regardless of gradient size.
        // The 25600-input dense layer turns coordinate moves into a
        // pre-activation shift 100x larger, so the step must be small for
        // the first-order term to dominate and descent to be guaranteed.
        let mut opt = Optimizer::rmsprop(RmsPropHyper {
            lr: 1e-6,
            ..RmsPropHyper::default()
        });
        opt.step(&mut model.trainable_params_mut(), &grads.tensors)
            .unwrap();
        // same mask, same batch statistics path: the loss must go down
        let (logits_after, _) = model.forward_frozen(&x, &cache.mask).unwrap();
        let (loss_after, _) = crossentropy_from_logits(&logits_after, &labels).unwrap();
        assert!(
            loss_after < loss_before,
            "loss went {loss_before} -> {loss_after}"
        );
    }
}
