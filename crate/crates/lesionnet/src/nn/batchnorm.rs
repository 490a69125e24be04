//! Batch normalization over the channel axis of `[N, C, spatial...]`
//! feature maps, with a fused hand-derived backward pass.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::nn::{join, Block, Forward, ParamKind};
use crate::tensor::{Element, Tensor, Var};

/// Learnable scale/shift plus running statistics. Train mode normalizes with
/// batch statistics (biased variance) and folds them into the running ones by
/// exponential moving average; inference normalizes with the running pair.
pub struct BatchNorm<T: Element> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: RefCell<Tensor<T>>,
    pub running_var: RefCell<Tensor<T>>,
    pub momentum: T,
    pub eps: T,
}

impl<T: Element> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Tensor::ones(vec![channels]),
            beta: Tensor::zeros(vec![channels]),
            running_mean: RefCell::new(Tensor::zeros(vec![channels])),
            running_var: RefCell::new(Tensor::ones(vec![channels])),
            momentum: T::from_f64(0.99),
            eps: T::from_f64(1e-3),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }
}

impl<T: Element> Block<T> for BatchNorm<T> {
    fn forward<'t>(
        &self,
        fc: &mut Forward<'t, T>,
        prefix: &str,
        x: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let xv = x.value();
        if xv.rank() < 3 {
            return Err(Error::shape(format!(
                "batch norm expects [N, C, spatial...], got {}",
                xv.shape()
            )));
        }
        let channels = self.channels();
        if xv.dims()[1] != channels {
            return Err(Error::shape(format!(
                "batch norm has {channels} channels but input has {}",
                xv.dims()[1]
            )));
        }
        let batch = xv.dims()[0];
        let spatial: usize = xv.shape().spatial().iter().product();
        let m = batch * spatial;

        let (mean, var) = if fc.train() {
            if m < 2 {
                return Err(Error::invalid(
                    "batch norm in train mode needs at least 2 values per channel",
                ));
            }
            let (mean, var) = channel_moments(&xv, batch, channels, spatial);
            // EMA update of the running statistics; a forward side effect,
            // never part of the recorded graph.
            let mom = self.momentum;
            let blend = |run: &Tensor<T>, cur: &[T]| {
                let mut out = run.clone();
                for (r, &c) in out.data_mut().iter_mut().zip(cur) {
                    *r = mom * *r + (T::one() - mom) * c;
                }
                out
            };
            let new_mean = blend(&self.running_mean.borrow(), &mean);
            let new_var = blend(&self.running_var.borrow(), &var);
            *self.running_mean.borrow_mut() = new_mean;
            *self.running_var.borrow_mut() = new_var;
            (mean, var)
        } else {
            (
                self.running_mean.borrow().data().to_vec(),
                self.running_var.borrow().data().to_vec(),
            )
        };

        let eps = self.eps;
        let invstd: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();

        // Normalize, keeping x-hat for the backward pass.
        let gamma = fc.param(join(prefix, "gamma"), &self.gamma);
        let beta = fc.param(join(prefix, "beta"), &self.beta);
        let gv = gamma.value();
        let bv = beta.value();
        let mut xhat = vec![T::zero(); xv.numel()];
        let mut y = vec![T::zero(); xv.numel()];
        let xs = xv.data();
        for n in 0..batch {
            for c in 0..channels {
                let base = (n * channels + c) * spatial;
                let (mu, istd, g, b) = (mean[c], invstd[c], gv.data()[c], bv.data()[c]);
                for s in 0..spatial {
                    let h = (xs[base + s] - mu) * istd;
                    xhat[base + s] = h;
                    y[base + s] = g * h + b;
                }
            }
        }
        let xhat = Tensor::from_vec(xv.shape().clone(), xhat)?;
        let value = Tensor::from_vec(xv.shape().clone(), y)?;

        let train = fc.train();
        let inv_m = T::from_f64(1.0 / m as f64);
        Var::custom(
            fc.tape(),
            value,
            vec![x, gamma, beta],
            Box::new(move |dy| {
                let dys = dy.data();
                let xh = xhat.data();
                let mut dgamma = vec![T::zero(); channels];
                let mut dbeta = vec![T::zero(); channels];
                for n in 0..batch {
                    for c in 0..channels {
                        let base = (n * channels + c) * spatial;
                        for s in 0..spatial {
                            dgamma[c] = dgamma[c] + dys[base + s] * xh[base + s];
                            dbeta[c] = dbeta[c] + dys[base + s];
                        }
                    }
                }
                let mut dx = vec![T::zero(); dys.len()];
                for c in 0..channels {
                    let g_istd = gv.data()[c] * invstd[c];
                    if train {
                        // d/dx of batch-statistic normalization:
                        // (g*istd/m) * (m*dy - sum(dy) - xhat * sum(dy*xhat))
                        let sum_dy = dbeta[c];
                        let sum_dy_xhat = dgamma[c];
                        for n in 0..batch {
                            let base = (n * channels + c) * spatial;
                            for s in 0..spatial {
                                let i = base + s;
                                dx[i] = g_istd
                                    * inv_m
                                    * (T::from_f64(m as f64) * dys[i]
                                        - sum_dy
                                        - xh[i] * sum_dy_xhat);
                            }
                        }
                    } else {
                        // running statistics are constants
                        for n in 0..batch {
                            let base = (n * channels + c) * spatial;
                            for s in 0..spatial {
                                dx[base + s] = dys[base + s] * g_istd;
                            }
                        }
                    }
                }
                Ok(vec![
                    Some(Tensor::from_vec(dy.shape().clone(), dx)?),
                    Some(Tensor::from_vec(vec![channels], dgamma)?),
                    Some(Tensor::from_vec(vec![channels], dbeta)?),
                ])
            }),
        )
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &Tensor<T>)) {
        f(&join(prefix, "gamma"), ParamKind::Weight, &self.gamma);
        f(&join(prefix, "beta"), ParamKind::Weight, &self.beta);
        f(
            &join(prefix, "running_mean"),
            ParamKind::Stat,
            &self.running_mean.borrow(),
        );
        f(
            &join(prefix, "running_var"),
            ParamKind::Stat,
            &self.running_var.borrow(),
        );
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor<T>)) {
        f(&join(prefix, "gamma"), ParamKind::Weight, &mut self.gamma);
        f(&join(prefix, "beta"), ParamKind::Weight, &mut self.beta);
        f(
            &join(prefix, "running_mean"),
            ParamKind::Stat,
            self.running_mean.get_mut(),
        );
        f(
            &join(prefix, "running_var"),
            ParamKind::Stat,
            self.running_var.get_mut(),
        );
    }
}

/// Per-channel mean and biased variance over batch and spatial positions.
fn channel_moments<T: Element>(
    x: &Tensor<T>,
    batch: usize,
    channels: usize,
    spatial: usize,
) -> (Vec<T>, Vec<T>) {
    let xs = x.data();
    let inv_m = T::from_f64(1.0 / (batch * spatial) as f64);
    let mut mean = vec![T::zero(); channels];
    for n in 0..batch {
        for c in 0..channels {
            let base = (n * channels + c) * spatial;
            let s: T = xs[base..base + spatial].iter().copied().sum();
            mean[c] = mean[c] + s;
        }
    }
    for m in mean.iter_mut() {
        *m = *m * inv_m;
    }
    let mut var = vec![T::zero(); channels];
    for n in 0..batch {
        for c in 0..channels {
            let base = (n * channels + c) * spatial;
            let mu = mean[c];
            let s: T = xs[base..base + spatial]
                .iter()
                .map(|&v| (v - mu) * (v - mu))
                .sum();
            var[c] = var[c] + s;
        }
    }
    for v in var.iter_mut() {
        *v = *v * inv_m;
    }
    (mean, var)
}
