use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::net::{loss_and_gradient, Mode};
use super::{NetError, NetParams, Params};

/// Gradients below this magnitude are compared on an absolute scale.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct CoordCheck {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub coords: Vec<CoordCheck>,
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares backpropagated gradients with central finite differences at
/// `coords`, in double precision with dropout disabled.
pub fn gradient_check_coords(
    params: &NetParams,
    input: &[f32],
    label: bool,
    epsilon: f64,
    coords: &[usize],
) -> Result<GradientCheck, NetError> {
    let p: Params<f64> = params.cast();
    let x: Vec<f64> = input.iter().map(|&v| f64::from(v)).collect();
    let labels = [label];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (_, grad) = loss_and_gradient(&p, &x, &labels, Mode::Infer, &mut rng)?;
    let mut probe = p.clone();
    let mut out = Vec::with_capacity(coords.len());
    for &i in coords {
        if i >= p.len() {
            return Err(NetError::Shape(format!("coordinate {i} out of {} parameters", p.len())));
        }
        let orig = probe.data[i];
        probe.data[i] = orig + epsilon;
        let (up, _) = loss_and_gradient(&probe, &x, &labels, Mode::Infer, &mut rng)?;
        probe.data[i] = orig - epsilon;
        let (down, _) = loss_and_gradient(&probe, &x, &labels, Mode::Infer, &mut rng)?;
        probe.data[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let analytic = grad.data[i];
        out.push(CoordCheck {
            index: i,
            analytic,
            numeric,
            relative_error: relative_error(analytic, numeric),
        });
    }
    let max_relative_error = out.iter().map(|c| c.relative_error).fold(0.0, f64::max);
    Ok(GradientCheck {
        max_relative_error,
        coords: out,
    })
}

/// Gradient check over `n_coords` distinct parameters drawn uniformly with
/// `seed`, always including the head bias.
pub fn gradient_check(
    params: &NetParams,
    input: &[f32],
    label: bool,
    epsilon: f64,
    n_coords: usize,
    seed: u64,
) -> Result<GradientCheck, NetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = params.len();
    let mut coords: Vec<usize> = sample(&mut rng, total, n_coords.min(total)).into_vec();
    if !coords.contains(&(total - 1)) {
        coords.push(total - 1);
    }
    coords.sort_unstable();
    gradient_check_coords(params, input, label, epsilon, &coords)
}
