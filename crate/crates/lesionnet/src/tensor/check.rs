//! Central-difference gradient checking against the tape's analytic
//! gradients. This is the independent oracle used by the test suites.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::storage::{Element, Tensor};
use crate::tensor::tape::{Tape, Var};

/// A scalar-valued tensor program: builds a loss from leaf variables.
pub trait TensorProgram<T: Element>:
    for<'t> Fn(&'t Tape<T>, &[Var<'t, T>]) -> Result<Var<'t, T>>
{
}

impl<T: Element, F> TensorProgram<T> for F where
    F: for<'t> Fn(&'t Tape<T>, &[Var<'t, T>]) -> Result<Var<'t, T>>
{
}

fn eval_scalar<T: Element>(f: &impl TensorProgram<T>, xs: &[Tensor<T>]) -> Result<T> {
    let tape = Tape::new();
    let vars: Vec<_> = xs.iter().map(|x| tape.leaf(x.clone(), false)).collect();
    let out = f(&tape, &vars)?;
    out.value().item().map_err(|_| {
        Error::Autodiff(format!(
            "gradient check needs a scalar-valued program, got shape {}",
            out.shape()
        ))
    })
}

/// Max over all coordinates of
/// `|analytic - (f(x+h e_i) - f(x-h e_i)) / 2h| / max(1, |analytic|)`.
pub fn grad_check<T: Element>(
    f: impl TensorProgram<T>,
    xs: &[Tensor<T>],
    h: T,
) -> Result<T> {
    grad_check_coords(&f, xs, h, None, &mut rand::thread_rng())
}

/// As [`grad_check`], but limits the number of checked coordinates per input,
/// sampling without replacement. Used for large composite models where a full
/// sweep over every weight would dominate the test budget.
pub fn grad_check_sampled<T: Element>(
    f: impl TensorProgram<T>,
    xs: &[Tensor<T>],
    h: T,
    max_coords_per_input: usize,
    rng: &mut impl Rng,
) -> Result<T> {
    grad_check_coords(&f, xs, h, Some(max_coords_per_input), rng)
}

fn grad_check_coords<T: Element>(
    f: &impl TensorProgram<T>,
    xs: &[Tensor<T>],
    h: T,
    max_coords: Option<usize>,
    rng: &mut impl Rng,
) -> Result<T> {
    if h <= T::zero() {
        return Err(Error::invalid("gradient check step must be positive"));
    }
    // Analytic pass.
    let tape = Tape::new();
    let vars: Vec<_> = xs.iter().map(|x| tape.leaf(x.clone(), true)).collect();
    let out = f(&tape, &vars)?;
    if out.value().numel() != 1 {
        return Err(Error::Autodiff(format!(
            "gradient check needs a scalar-valued program, got shape {}",
            out.shape()
        )));
    }
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor<T>> = vars.iter().map(|v| grads.grad(*v)).collect();
    drop(tape);

    let two_h = h + h;
    let mut worst = T::zero();
    let mut work: Vec<Tensor<T>> = xs.to_vec();
    for (i, grad) in analytic.iter().enumerate() {
        let n = xs[i].numel();
        let coords: Vec<usize> = match max_coords {
            Some(cap) if cap < n => {
                let mut all: Vec<usize> = (0..n).collect();
                all.shuffle(rng);
                all.truncate(cap);
                all
            }
            _ => (0..n).collect(),
        };
        for j in coords {
            let orig = xs[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let plus = eval_scalar(f, &work)?;
            work[i].data_mut()[j] = orig - h;
            let minus = eval_scalar(f, &work)?;
            work[i].data_mut()[j] = orig;

            let numeric = (plus - minus) / two_h;
            let a = grad.data()[j];
            let err = (a - numeric).abs() / T::one().max(a.abs());
            if err > worst {
                worst = err;
            }
        }
    }
    Ok(worst)
}
