use super::{AutodiffError, Tape, Tensor, Var};

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares reverse-mode gradients of the scalar function `f` at `x` with
/// central differences of step `h`. Returns the maximum elementwise relative
/// error `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn finite_difference_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, AutodiffError>,
{
    finite_difference_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), h)
}

/// Multi-input form of [`finite_difference_check`]; every input is treated as
/// differentiable.
pub fn finite_difference_check_many<F>(f: F, inputs: &[Tensor], h: f64) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError>,
{
    let eval = |values: &[Tensor]| -> Result<f64, AutodiffError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut worst: f64 = 0.0;
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).map(|g| g.data().to_vec()).unwrap_or_else(|| vec![0.0; inputs[k].len()]);
        for j in 0..inputs[k].len() {
            let orig = inputs[k].data()[j];
            probe[k].data_mut()[j] = orig + h;
            let up = eval(&probe)?;
            probe[k].data_mut()[j] = orig - h;
            let down = eval(&probe)?;
            probe[k].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(rel_err(analytic[j], numeric));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_function_is_exact() {
        let x = Tensor::new(vec![4], vec![0.3, -1.2, 2.5, 0.0]).unwrap();
        let err = finite_difference_check(
            |t, x| {
                let s = t.scale(x, 3.0)?;
                t.sum(s)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-10, "{}", err);
    }

    #[test]
    fn two_layer_perceptron() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inputs = [
            Tensor::uniform(&[6, 4], 1.0, &mut rng),
            Tensor::uniform(&[4, 8], 1.0, &mut rng),
            Tensor::uniform(&[8], 1.0, &mut rng),
            Tensor::uniform(&[8, 1], 1.0, &mut rng),
        ];
        let err = finite_difference_check_many(
            |t, v| {
                let h = t.matmul(v[0], v[1])?;
                let h = t.add_row(h, v[2])?;
                let h = t.gelu(h)?;
                let o = t.matmul(h, v[3])?;
                let o = t.square(o)?;
                t.mean(o)
            },
            &inputs,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{}", err);
    }

    #[test]
    fn eval_dropout_matches_plain_gradients() {
        let x = Tensor::new(vec![3], vec![0.5, -0.25, 2.0]).unwrap();
        let grad = |drop: bool| {
            let mut t = Tape::new();
            let v = t.param(x.clone());
            let d = if drop {
                t.dropout(v, 0.4, false, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
            } else {
                v
            };
            let s = t.square(d).unwrap();
            let s = t.sum(s).unwrap();
            t.backward(s).unwrap().get(v).unwrap().clone()
        };
        assert_eq!(grad(true), grad(false));
    }
}
