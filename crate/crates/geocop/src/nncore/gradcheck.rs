//! Central finite-difference verification of analytic gradients.

use super::Parameter;

/// Compares the gradients already stored in the parameters of `ctx` against
/// central finite differences of `loss`, returning the worst relative error.
///
/// `params_of` must yield the same parameters in the same order on every
/// call. Tensors larger than `max_coords_per_tensor` are probed on an evenly
/// strided subset of coordinates. The relative error uses a floor on the
/// denominator so finite-difference noise on near-zero gradients does not
/// register as failure.
pub fn grad_check<C>(
    ctx: &mut C,
    params_of: impl Fn(&mut C) -> Vec<&mut Parameter>,
    loss: impl Fn(&C) -> f64,
    h: f64,
    max_coords_per_tensor: usize,
) -> f64 {
    let analytic: Vec<Vec<f64>> = params_of(ctx)
        .iter()
        .map(|p| p.grad.data().to_vec())
        .collect();
    let sizes: Vec<usize> = analytic.iter().map(|g| g.len()).collect();

    let mut worst = 0.0f64;
    for (k, &len) in sizes.iter().enumerate() {
        let stride = (len / max_coords_per_tensor.max(1)).max(1);
        let mut idx = 0;
        while idx < len {
            params_of(ctx)[k].value.data_mut()[idx] += h;
            let lp = loss(ctx);
            params_of(ctx)[k].value.data_mut()[idx] -= 2.0 * h;
            let lm = loss(ctx);
            params_of(ctx)[k].value.data_mut()[idx] += h;

            let fd = (lp - lm) / (2.0 * h);
            let an = analytic[k][idx];
            let rel = (fd - an).abs() / (fd.abs() + an.abs()).max(1e-4);
            if rel > worst {
                worst = rel;
            }
            idx += stride;
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::super::Tensor;
    use super::*;

    struct Quad {
        w: Parameter,
    }

    fn quad_loss(c: &Quad) -> f64 {
        c.w.value.data().iter().map(|x| x * x).sum()
    }

    #[test]
    fn quadratic_loss_checks_clean() {
        let mut ctx = Quad {
            w: Parameter::new("w", Tensor::from_vec(&[4], vec![0.5, -1.5, 2.0, 0.01])),
        };
        let grads: Vec<f64> = ctx.w.value.data().iter().map(|x| 2.0 * x).collect();
        ctx.w.grad.data_mut().copy_from_slice(&grads);
        let err = grad_check(&mut ctx, |c| vec![&mut c.w], quad_loss, 1e-5, 100);
        assert!(err < 1e-8, "error {err}");
    }

    #[test]
    fn corrupted_backward_is_detected() {
        let mut ctx = Quad {
            w: Parameter::new("w", Tensor::from_vec(&[4], vec![0.5, -1.5, 2.0, 0.01])),
        };
        // Deliberately wrong: doubled gradients.
        let grads: Vec<f64> = ctx.w.value.data().iter().map(|x| 4.0 * x).collect();
        ctx.w.grad.data_mut().copy_from_slice(&grads);
        let err = grad_check(&mut ctx, |c| vec![&mut c.w], quad_loss, 1e-5, 100);
        assert!(err > 1e-2, "negative control failed: error {err}");
    }
}
