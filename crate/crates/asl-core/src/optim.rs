//! Adam and RMSProp.
//!
//! An optimizer owns one state tensor set per parameter, matched by
//! position: the caller must pass the same parameter list, in the same
//! order, on every step.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsPropHyper {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
}

impl Default for RmsPropHyper {
    fn default() -> Self {
        RmsPropHyper {
            lr: 0.001,
            rho: 0.9,
            eps: 1e-7,
        }
    }
}

enum Kind {
    Adam { beta1: f64, beta2: f64, eps: f64, t: u64 },
    RmsProp { rho: f64, eps: f64 },
}

pub struct Optimizer<T> {
    lr: f64,
    kind: Kind,
    /// first moments (Adam only), one per parameter
    m: Vec<Tensor<T>>,
    /// second moments, one per parameter
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn adam(h: AdamHyper) -> Self {
        Optimizer {
            lr: h.lr,
            kind: Kind::Adam {
                beta1: h.beta1,
                beta2: h.beta2,
                eps: h.eps,
                t: 0,
            },
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn rmsprop(h: RmsPropHyper) -> Self {
        Optimizer {
            lr: h.lr,
            kind: Kind::RmsProp { rho: h.rho, eps: h.eps },
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            Kind::Adam { .. } => "adam",
            Kind::RmsProp { .. } => "rmsprop",
        }
    }

    fn ensure_state(&mut self, params: &[&mut Tensor<T>]) -> Result<()> {
        if self.v.is_empty() {
            self.v = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
            if matches!(self.kind, Kind::Adam { .. }) {
                self.m = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
            }
            return Ok(());
        }
        if self.v.len() != params.len() {
            return Err(Error::state(format!(
                "optimizer was built for {} parameters, got {}",
                self.v.len(),
                params.len()
            )));
        }
        for (sv, p) in self.v.iter().zip(params) {
            if sv.shape() != p.shape() {
                return Err(Error::state(format!(
                    "optimizer state shape {:?} does not match parameter {:?}",
                    sv.shape(),
                    p.shape()
                )));
            }
        }
        Ok(())
    }

    /// One update over all parameters. `grads[i]` is the gradient for
    /// `params[i]`.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::state(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::shape(format!(
                    "gradient shape {:?} does not match parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
        }
        self.ensure_state(params)?;
        let lr = T::from_f64(self.lr);
        match &mut self.kind {
            Kind::Adam { beta1, beta2, eps, t } => {
                *t += 1;
                let b1 = T::from_f64(*beta1);
                let b2 = T::from_f64(*beta2);
                let e = T::from_f64(*eps);
                let one = T::one();
                // bias correction for the zero-initialized moments
                let c1 = T::from_f64(1.0 - beta1.powi(*t as i32));
                let c2 = T::from_f64(1.0 - beta2.powi(*t as i32));
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    for ((pv, &gv), (mv, vv)) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut().iter_mut().zip(v.data_mut()))
                    {
                        *mv = b1 * *mv + (one - b1) * gv;
                        *vv = b2 * *vv + (one - b2) * gv * gv;
                        let mhat = *mv / c1;
                        let vhat = *vv / c2;
                        *pv = *pv - lr * mhat / (vhat.sqrt() + e);
                    }
                }
            }
            Kind::RmsProp { rho, eps } => {
                let r = T::from_f64(*rho);
                let e = T::from_f64(*eps);
                let one = T::one();
                for ((p, g), v) in params.iter_mut().zip(grads).zip(self.v.iter_mut()) {
                    for ((pv, &gv), vv) in
                        p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut())
                    {
                        *vv = r * *vv + (one - r) * gv * gv;
                        *pv = *pv - lr * gv / (vv.sqrt() + e);
                    }
                }
            }
        }
        Ok(())
    }
}
