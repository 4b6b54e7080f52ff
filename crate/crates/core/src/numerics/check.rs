use super::{Graph, NumericsError, Tensor, Var};

/// Compares the recorded backward pass of `f` against central differences.
///
/// `f` must build a scalar node from the single input `x`. Returns the
/// maximum over coordinates of
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
///
/// The caller keeps the probe points away from non-differentiable kinks
/// (the hinge at 0).
pub fn check_gradient<F>(f: F, x: &Tensor, eps: f64) -> Result<f64, NumericsError>
where
    F: Fn(&mut Graph, Var) -> Result<Var, NumericsError>,
{
    assert!(eps > 0.0, "eps must be positive");

    let mut g = Graph::new();
    let vx = g.leaf(x);
    let loss = f(&mut g, vx)?;
    g.backward(loss)?;
    let analytic = g.grad(vx)?.to_vec();

    let eval = |probe: &Tensor| -> Result<f64, NumericsError> {
        let mut g = Graph::new();
        let v = g.leaf(probe);
        let out = f(&mut g, v)?;
        Ok(g.value(out).data[0])
    };

    let mut max_err: f64 = 0.0;
    let mut probe = x.clone();
    for i in 0..x.data.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + eps;
        let fp = eval(&probe)?;
        probe.data[i] = orig - eps;
        let fm = eval(&probe)?;
        probe.data[i] = orig;

        let numeric = (fp - fm) / (2.0 * eps);
        let denom = (analytic[i].abs() + numeric.abs()).max(1e-8);
        max_err = max_err.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn sum_of_squares_checks_tightly() {
        let x = Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let err = check_gradient(|g, v| g.dot(v, v), &x, 1e-5).unwrap();
        assert!(err < 1e-6, "max relative error {err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let x = Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let err = check_gradient(
            |g, v| {
                let c = g.scalar(7.0);
                let _ = v;
                Ok(c)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn every_elementary_op_checks_at_seeded_points() {
        let mut rng = Rng::new(2024);
        for trial in 0..10 {
            let x = Tensor::uniform(vec![2, 3], -1.5, 1.5, &mut rng);
            // keep hinge inputs away from the kink
            let safe = Tensor::new(
                x.shape.clone(),
                x.data
                    .iter()
                    .map(|&v| if v.abs() < 0.05 { v + 0.1 } else { v })
                    .collect(),
            )
            .unwrap();
            let w = Tensor::uniform(vec![3, 2], -1.0, 1.0, &mut rng);
            let r = Tensor::uniform(vec![2, 3], -1.0, 1.0, &mut rng);

            let cases: Vec<(&str, f64)> = vec![
                (
                    "matmul",
                    check_gradient(
                        |g, v| {
                            let wv = g.leaf(&w);
                            let p = g.matmul(v, wv)?;
                            Ok(g.sum(p))
                        },
                        &safe,
                        1e-5,
                    )
                    .unwrap(),
                ),
                (
                    "add",
                    check_gradient(
                        |g, v| {
                            let rv = g.leaf(&r);
                            let s = g.add(v, rv)?;
                            g.dot(s, s)
                        },
                        &safe,
                        1e-5,
                    )
                    .unwrap(),
                ),
                (
                    "mul",
                    check_gradient(
                        |g, v| {
                            let rv = g.leaf(&r);
                            let m = g.mul(v, rv)?;
                            Ok(g.sum(m))
                        },
                        &safe,
                        1e-5,
                    )
                    .unwrap(),
                ),
                (
                    "sigmoid",
                    check_gradient(
                        |g, v| {
                            let s = g.sigmoid(v);
                            let rv = g.leaf(&r);
                            g.dot(s, rv)
                        },
                        &safe,
                        1e-5,
                    )
                    .unwrap(),
                ),
                (
                    "tanh",
                    check_gradient(
                        |g, v| {
                            let t = g.tanh(v);
                            let rv = g.leaf(&r);
                            g.dot(t, rv)
                        },
                        &safe,
                        1e-5,
                    )
                    .unwrap(),
                ),
                (
                    "relu_hinge",
                    check_gradient(
                        |g, v| {
                            let h = g.relu_hinge(v);
                            let rv = g.leaf(&r);
                            g.dot(h, rv)
                        },
                        &safe,
                        1e-5,
                    )
                    .unwrap(),
                ),
                (
                    "softmax",
                    check_gradient(
                        |g, v| {
                            let s = g.softmax(v)?;
                            let rv = g.leaf(&r);
                            g.dot(s, rv)
                        },
                        &safe,
                        1e-5,
                    )
                    .unwrap(),
                ),
            ];
            for (name, err) in cases {
                assert!(err <= 1e-4, "trial {trial}: {name} error {err}");
            }
        }
    }
}
