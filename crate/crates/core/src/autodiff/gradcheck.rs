use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Outcome of comparing tape adjoints against central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(1, |numeric|)` over checked elements.
    pub max_rel_error: f64,
    /// `(parameter, element)` attaining `max_rel_error`.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    /// Elements whose ±step probes crossed a kink (relu branch or extremum
    /// switch). These are nondifferentiable within the step and are skipped.
    pub excluded: usize,
}

fn evaluate<F>(f: &F, params: &[Tensor]) -> Result<(f64, u64)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params
        .iter()
        .map(|p| tape.leaf(p.clone()))
        .collect::<Result<Vec<_>>>()?;
    let root = f(&mut tape, &vars)?;
    let value = tape.value(root);
    let Some(v) = value.item() else {
        return Err(Error::NonScalarRoot(value.shape().to_vec()));
    };
    if !v.is_finite() {
        return Err(Error::NonFinite { op: "grad_check" });
    }
    Ok((v, tape.branch_signature()))
}

/// Checks the adjoints of `f` at `params` against central differences with
/// the given `step`.
///
/// `f` receives a fresh tape with one leaf per parameter and returns the
/// scalar root.
pub fn grad_check<F>(f: F, params: &[Tensor], step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid("grad_check", format!("step must be positive, got {step}")));
    }
    let analytic = {
        let mut tape = Tape::new();
        let vars = params
            .iter()
            .map(|p| tape.leaf(p.clone()))
            .collect::<Result<Vec<_>>>()?;
        let root = f(&mut tape, &vars)?;
        if !tape.value(root).is_finite() {
            return Err(Error::NonFinite { op: "grad_check" });
        }
        let grads = tape.backward(root)?;
        vars.iter().map(|&v| grads.wrt(&tape, v)).collect::<Vec<_>>()
    };
    let (_, base_sig) = evaluate(&f, params)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        excluded: 0,
    };
    let mut probe = params.to_vec();
    for (pi, param) in params.iter().enumerate() {
        for ei in 0..param.len() {
            let orig = param.data()[ei];
            probe[pi].data_mut()[ei] = orig + step;
            let (fp, sp) = evaluate(&f, &probe)?;
            probe[pi].data_mut()[ei] = orig - step;
            let (fm, sm) = evaluate(&f, &probe)?;
            probe[pi].data_mut()[ei] = orig;

            if sp != base_sig || sm != base_sig {
                report.excluded += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * step);
            let err = (analytic[pi].data()[ei] - numeric).abs() / numeric.abs().max(1.0);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((pi, ei));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Extremum;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn quadratic_is_exact() {
        let theta = Tensor::vector(vec![1.0, 2.0]);
        let r = grad_check(|t, v| t.sum_squares(v[0]), &[theta], 1e-6).unwrap();
        assert_eq!(r.checked, 2);
        assert!(r.max_rel_error <= 1e-9, "{r:?}");
    }

    #[test]
    fn relu_sum_away_from_kink() {
        let theta = Tensor::vector(vec![-0.7, 0.3, 1.2, -0.05]);
        let r = grad_check(
            |t, v| {
                let y = t.relu(v[0])?;
                t.sum(y)
            },
            &[theta],
            1e-6,
        )
        .unwrap();
        assert_eq!(r.excluded, 0);
        assert!(r.max_rel_error <= 1e-6, "{r:?}");
    }

    #[test]
    fn relu_kink_is_excluded() {
        let theta = Tensor::vector(vec![0.0, 0.5]);
        let r = grad_check(
            |t, v| {
                let y = t.relu(v[0])?;
                t.sum(y)
            },
            &[theta],
            1e-6,
        )
        .unwrap();
        assert_eq!(r.excluded, 1);
        assert_eq!(r.checked, 1);
    }

    #[test]
    fn rejects_bad_step_and_non_finite() {
        let theta = Tensor::vector(vec![1.0]);
        assert!(grad_check(|t, v| t.sum(v[0]), &[theta.clone()], 0.0).is_err());
        let big = Tensor::vector(vec![1e200]);
        assert!(grad_check(|t, v| t.sum_squares(v[0]), &[big], 1e-6).is_err());
    }

    #[test]
    fn matmul_gradient_matches_ones_times_bt() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = rand_tensor(&mut rng, &[3, 4]);
        let b = rand_tensor(&mut rng, &[4, 2]);
        let r = grad_check(
            |t, v| {
                let c = t.matmul(v[0], v[1])?;
                t.sum(c)
            },
            &[a.clone(), b.clone()],
            1e-6,
        )
        .unwrap();
        assert!(r.max_rel_error <= 1e-6, "{r:?}");

        // closed form: d sum(AB)/dA = ones(3x2) * B^T, i.e. row sums of B
        let mut t = Tape::new();
        let av = t.leaf(a).unwrap();
        let bv = t.leaf(b.clone()).unwrap();
        let c = t.matmul(av, bv).unwrap();
        let s = t.sum(c).unwrap();
        let g = t.backward(s).unwrap().wrt(&t, av);
        for i in 0..3 {
            for p in 0..4 {
                let expect = b.data()[p * 2] + b.data()[p * 2 + 1];
                assert!((g.data()[i * 4 + p] - expect).abs() < 1e-15);
            }
        }
    }

    /// Every tape op on 100 random points with no kink inside the step.
    #[test]
    fn every_op_passes_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        type Build = fn(&mut Tape, &[Var]) -> Result<Var>;
        let cases: Vec<(&str, Vec<Vec<usize>>, Build)> = vec![
            ("matmul", vec![vec![2, 3], vec![3, 2]], |t, v| {
                let y = t.matmul(v[0], v[1])?;
                t.sum_squares(y)
            }),
            ("transpose", vec![vec![2, 3]], |t, v| {
                let y = t.transpose(v[0])?;
                let w = t.leaf(Tensor::new(vec![3, 2], vec![0.3, -1.0, 2.0, 0.7, -0.4, 1.1])?)?;
                let z = t.matmul(v[0], w)?;
                let y = t.reshape(y, vec![6])?;
                let a = t.sum_squares(y)?;
                let b = t.sum_squares(z)?;
                t.add(a, b)
            }),
            ("add_row_bias", vec![vec![3, 2], vec![2]], |t, v| {
                let y = t.add_row_bias(v[0], v[1])?;
                t.sum_squares(y)
            }),
            ("affine", vec![vec![4]], |t, v| {
                let y = t.affine(v[0], -2.5, 0.3)?;
                t.sum_squares(y)
            }),
            ("relu", vec![vec![5]], |t, v| {
                let y = t.affine(v[0], 1.0, 0.1)?;
                let y = t.relu(y)?;
                t.sum_squares(y)
            }),
            ("extrema_max", vec![vec![3, 4]], |t, v| {
                let y = t.reduce_extrema(v[0], &[0], Extremum::Max)?;
                t.sum_squares(y)
            }),
            ("extrema_min", vec![vec![2, 2, 3]], |t, v| {
                let y = t.reduce_extrema(v[0], &[1, 2], Extremum::Min)?;
                t.sum_squares(y)
            }),
            ("sqrt", vec![vec![3]], |t, v| {
                let y = t.sum_squares(v[0])?;
                let y = t.affine(y, 1.0, 0.5)?;
                t.sqrt(y)
            }),
            ("conv2d_same", vec![vec![2, 2, 4, 3], vec![3, 2, 3, 3], vec![3]], |t, v| {
                let y = t.conv2d_same(v[0], v[1], v[2])?;
                t.sum_squares(y)
            }),
            ("global_max_avg_pool", vec![vec![2, 3, 2, 3]], |t, v| {
                let y = t.global_max_avg_pool(v[0])?;
                t.sum_squares(y)
            }),
            ("softmax_cross_entropy", vec![vec![4, 3]], |t, v| {
                t.softmax_cross_entropy(v[0], &[0, 2, 1, 2])
            }),
        ];
        for (name, shapes, build) in cases {
            let mut done = 0;
            while done < 100 {
                let params: Vec<Tensor> = shapes.iter().map(|s| rand_tensor(&mut rng, s)).collect();
                let r = grad_check(build, &params, 1e-6).unwrap();
                if r.excluded > 0 {
                    continue;
                }
                assert!(r.max_rel_error <= 1e-5, "{name}: {r:?}");
                done += 1;
            }
        }
    }
}
