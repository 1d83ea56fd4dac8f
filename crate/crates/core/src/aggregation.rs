//! Server-side aggregation strategies: the generalization-aware mixing
//! weights (domain correlation β plus performance-gap γ), plain
//! sample-proportional averaging, and the proximal penalty baseline.

use crate::error::{Error, Result};
use crate::nn::{Gradients, LayerParams, ModelParams};
use crate::tensor::Tensor;

/// One client's contribution to a round.
#[derive(Debug, Clone)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub model: ModelParams,
    pub num_samples: usize,
    /// Frobenius distance of the domain-layer weights from the global model.
    pub d: f64,
    /// Mean local loss of the broadcast global model minus the trained
    /// local model's.
    pub gap: f64,
    /// Drift mean from the last local epoch (diagnostic; 0 when the
    /// debiased classifier is disabled).
    pub lambda_last: f64,
    /// Post-training mean cross-entropy on the local shard (diagnostic).
    pub local_loss: f64,
    /// Post-training accuracy on the local shard (diagnostic).
    pub local_acc: f64,
}

/// Mixing weights for one round, with their β/γ components.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationPlan {
    pub weights: Vec<f64>,
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
}

/// Performance gap: loss of the received global model minus loss of the
/// trained local model, both mean cross-entropies on the same local data.
pub fn gap_value(global_loss_on_local: f64, local_loss_on_local: f64) -> Result<f64> {
    if !global_loss_on_local.is_finite() || !local_loss_on_local.is_finite() {
        return Err(Error::NonFinite(format!(
            "gap inputs ({global_loss_on_local}, {local_loss_on_local})"
        )));
    }
    Ok(global_loss_on_local - local_loss_on_local)
}

/// Logistic transform `1 / (e^{-gap} + 1)`.
pub fn gamma(gap: f64) -> f64 {
    1.0 / ((-gap).exp() + 1.0)
}

/// Normalized d shares: `β_i = d_i / Σd`, or uniform `1/N` when every
/// distance is zero.
pub fn betas_from_distances(d: &[f64]) -> Result<Vec<f64>> {
    if d.is_empty() {
        return Err(Error::InvalidConfig("no clients".into()));
    }
    if let Some(&bad) = d.iter().find(|&&x| !x.is_finite() || x < 0.0) {
        return Err(Error::InvalidConfig(format!(
            "distances must be finite and non-negative, got {bad}"
        )));
    }
    let sum: f64 = d.iter().sum();
    let n = d.len() as f64;
    Ok(if sum == 0.0 {
        vec![1.0 / n; d.len()]
    } else {
        d.iter().map(|&x| x / sum).collect()
    })
}

/// Generalization-aware mixing weights:
/// `weight_i = ½ [ (1 − β_i)/(N − 1) + γ_i / Σγ ]`.
pub fn gga_weights(d: &[f64], gammas: &[f64]) -> Result<AggregationPlan> {
    let n = d.len();
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "aggregation weights need at least 2 clients, got {n}"
        )));
    }
    if gammas.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} distances vs {} gammas",
            gammas.len()
        )));
    }
    if let Some(&bad) = gammas.iter().find(|&&g| !(g > 0.0 && g < 1.0)) {
        return Err(Error::InvalidConfig(format!(
            "gamma must lie in (0, 1), got {bad}"
        )));
    }
    let betas = betas_from_distances(d)?;
    let gamma_sum: f64 = gammas.iter().sum();
    let weights: Vec<f64> = betas
        .iter()
        .zip(gammas)
        .map(|(&b, &g)| 0.5 * ((1.0 - b) / (n as f64 - 1.0) + g / gamma_sum))
        .collect();
    Ok(AggregationPlan {
        weights,
        betas,
        gammas: gammas.to_vec(),
    })
}

/// Sample-proportional weights `K_i / ΣK`.
pub fn fedavg_weights(sizes: &[usize]) -> Result<Vec<f64>> {
    if sizes.is_empty() {
        return Err(Error::InvalidConfig("no clients".into()));
    }
    if sizes.contains(&0) {
        return Err(Error::InvalidConfig("client sample count is zero".into()));
    }
    let total: usize = sizes.iter().sum();
    Ok(sizes.iter().map(|&s| s as f64 / total as f64).collect())
}

/// Weighted parameter sum over shape-identical models, applied to every
/// tensor including biases. Models must arrive in a fixed order (sorted by
/// client id) for bit-reproducible results.
pub fn aggregate(models: &[ModelParams], weights: &[f64]) -> Result<ModelParams> {
    if models.is_empty() {
        return Err(Error::InvalidConfig("no models to aggregate".into()));
    }
    if models.len() != weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} models vs {} weights",
            models.len(),
            weights.len()
        )));
    }
    let wsum: f64 = weights.iter().sum();
    if (wsum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidConfig(format!(
            "aggregation weights sum to {wsum}, expected 1"
        )));
    }
    let first = &models[0];
    for m in &models[1..] {
        if !first.same_shape(m) {
            return Err(Error::ShapeMismatch("models differ in shape".into()));
        }
    }
    let layers = (0..first.layers.len())
        .map(|k| {
            let mut weight = vec![0.0; first.layers[k].weight.len()];
            let mut bias = vec![0.0; first.layers[k].bias.len()];
            for (m, &w) in models.iter().zip(weights) {
                for (acc, &p) in weight.iter_mut().zip(m.layers[k].weight.data()) {
                    *acc += w * p;
                }
                for (acc, &p) in bias.iter_mut().zip(m.layers[k].bias.data()) {
                    *acc += w * p;
                }
            }
            Ok(LayerParams {
                weight: Tensor::new(first.layers[k].weight.shape().to_vec(), weight)?,
                bias: Tensor::new(first.layers[k].bias.shape().to_vec(), bias)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelParams {
        spec: first.spec.clone(),
        layers,
    })
}

/// Proximal penalty `(μ/2)·‖w − w_g‖²` with gradient `μ·(w − w_g)`.
pub fn prox_penalty(
    w: &ModelParams,
    w_global: &ModelParams,
    mu: f64,
) -> Result<(f64, Gradients)> {
    if !mu.is_finite() || mu < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "mu must be finite and non-negative, got {mu}"
        )));
    }
    if !w.same_shape(w_global) {
        return Err(Error::ShapeMismatch("prox models differ in shape".into()));
    }
    let mut loss = 0.0;
    let mut grads = Gradients::zeros_like(w);
    for (k, (lw, lg)) in w.layers.iter().zip(&w_global.layers).enumerate() {
        let gl = &mut grads.layers[k];
        for ((&a, &b), g) in lw
            .weight
            .data()
            .iter()
            .zip(lg.weight.data())
            .zip(gl.weight.data_mut())
        {
            let diff = a - b;
            loss += 0.5 * mu * diff * diff;
            *g = mu * diff;
        }
        for ((&a, &b), g) in lw
            .bias
            .data()
            .iter()
            .zip(lg.bias.data())
            .zip(gl.bias.data_mut())
        {
            let diff = a - b;
            loss += 0.5 * mu * diff * diff;
            *g = mu * diff;
        }
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{mlp_init, ModelSpec};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gap_is_a_plain_difference() {
        assert_eq!(gap_value(1.2, 0.7).unwrap(), 0.5);
        assert_eq!(gap_value(0.9, 0.9).unwrap(), 0.0);
        assert_eq!(gap_value(0.7, 1.2).unwrap(), -0.5);
        assert!(gap_value(f64::NAN, 0.0).is_err());
        assert!(gap_value(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn gamma_is_the_logistic() {
        assert_eq!(gamma(0.0), 0.5);
        assert!((gamma(3.0f64.ln()) - 0.75).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let x: f64 = rng.random_range(-20.0..20.0);
            assert!((gamma(-x) - (1.0 - gamma(x))).abs() < 1e-15);
            assert!(gamma(x) > 0.0 && gamma(x) < 1.0);
        }
    }

    #[test]
    fn gga_hand_oracle() {
        // d = (1,2,3) gives β = (1/6, 1/3, 1/2); equal γ contribute 1/3 each.
        let plan = gga_weights(&[1.0, 2.0, 3.0], &[0.5, 0.5, 0.5]).unwrap();
        let expected = [0.375, 1.0 / 3.0, 7.0 / 24.0];
        for (w, e) in plan.weights.iter().zip(expected) {
            assert!((w - e).abs() < 1e-12);
        }
        let expected_betas = [1.0 / 6.0, 1.0 / 3.0, 0.5];
        for (b, e) in plan.betas.iter().zip(expected_betas) {
            assert!((b - e).abs() < 1e-15);
        }
    }

    #[test]
    fn gga_reduces_to_uniform_on_symmetric_inputs() {
        for n in [2usize, 3, 8, 32] {
            let plan = gga_weights(&vec![0.7; n], &vec![0.3; n]).unwrap();
            for &w in &plan.weights {
                assert!((w - 1.0 / n as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gga_handles_all_zero_distances() {
        let plan = gga_weights(&[0.0, 0.0], &[0.6, 0.2]).unwrap();
        assert_eq!(plan.betas, vec![0.5, 0.5]);
        let sum: f64 = plan.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(plan.weights[0] > plan.weights[1]);
    }

    #[test]
    fn gga_is_a_simplex_point_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let n = rng.random_range(2..=32);
            let d: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
            let g: Vec<f64> = (0..n).map(|_| rng.random_range(1e-6..1.0)).collect();
            let plan = gga_weights(&d, &g).unwrap();
            let sum: f64 = plan.weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(plan.weights.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn gga_weight_monotone_in_d_and_gap() {
        let base = gga_weights(&[1.0, 2.0, 3.0], &[0.4, 0.5, 0.6]).unwrap();
        let more_d = gga_weights(&[1.5, 2.0, 3.0], &[0.4, 0.5, 0.6]).unwrap();
        assert!(more_d.weights[0] <= base.weights[0]);
        let more_gap = gga_weights(&[1.0, 2.0, 3.0], &[gamma(0.5), 0.5, 0.6]).unwrap();
        assert!(more_gap.weights[0] > base.weights[0]);
    }

    #[test]
    fn betas_are_scale_invariant() {
        let d = [0.3, 1.2, 0.9, 2.4];
        let a = betas_from_distances(&d).unwrap();
        let scaled: Vec<f64> = d.iter().map(|x| x * 17.5).collect();
        let b = betas_from_distances(&scaled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gga_rejects_bad_inputs() {
        assert!(gga_weights(&[1.0], &[0.5]).is_err());
        assert!(gga_weights(&[], &[]).is_err());
        assert!(gga_weights(&[-1.0, 2.0], &[0.5, 0.5]).is_err());
        assert!(gga_weights(&[1.0, 2.0], &[0.0, 0.5]).is_err());
        assert!(gga_weights(&[1.0, 2.0], &[0.5, 1.0]).is_err());
    }

    #[test]
    fn fedavg_weights_are_proportional()  {
        assert_eq!(fedavg_weights(&[10, 30]).unwrap(), vec![0.25, 0.75]);
        assert_eq!(fedavg_weights(&[7, 7, 7]).unwrap(), vec![1.0 / 3.0; 3]);
        assert_eq!(fedavg_weights(&[42]).unwrap(), vec![1.0]);
        assert!(fedavg_weights(&[3, 0]).is_err());
        assert!(fedavg_weights(&[]).is_err());
    }

    #[test]
    fn aggregate_of_identical_models_is_the_model() {
        let spec = ModelSpec::new(2, vec![3], 2);
        let m = mlp_init(&spec, 4).unwrap();
        let out = aggregate(
            &[m.clone(), m.clone(), m.clone()],
            &[0.2, 0.5, 0.3],
        )
        .unwrap();
        for (a, b) in out.layers.iter().zip(&m.layers) {
            for (x, y) in a.weight.data().iter().zip(b.weight.data()) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn aggregate_vertex_weight_selects_one_model() {
        let spec = ModelSpec::new(2, vec![3], 2);
        let a = mlp_init(&spec, 4).unwrap();
        let b = mlp_init(&spec, 5).unwrap();
        let out = aggregate(&[a.clone(), b], &[1.0, 0.0]).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn aggregate_scalar_arithmetic() {
        let spec = ModelSpec::new(1, vec![1], 2);
        let mut zeros = mlp_init(&spec, 0).unwrap();
        let mut ones = mlp_init(&spec, 0).unwrap();
        for layer in &mut zeros.layers {
            for x in layer.weight.data_mut() {
                *x = 0.0;
            }
        }
        for layer in &mut ones.layers {
            for x in layer.weight.data_mut() {
                *x = 1.0;
            }
            for x in layer.bias.data_mut() {
                *x = 1.0;
            }
        }
        let out = aggregate(&[zeros, ones], &[0.25, 0.75]).unwrap();
        for layer in &out.layers {
            assert!(layer.weight.data().iter().all(|&x| x == 0.75));
            assert!(layer.bias.data().iter().all(|&x| x == 0.75));
        }
    }

    #[test]
    fn aggregate_is_affine_in_the_weights() {
        let spec = ModelSpec::new(2, vec![3], 2);
        let models = [
            mlp_init(&spec, 1).unwrap(),
            mlp_init(&spec, 2).unwrap(),
            mlp_init(&spec, 3).unwrap(),
        ];
        let w1 = [0.5, 0.3, 0.2];
        let w2 = [0.1, 0.6, 0.3];
        let t = 0.4;
        let mixed: Vec<f64> = w1
            .iter()
            .zip(&w2)
            .map(|(a, b)| t * a + (1.0 - t) * b)
            .collect();
        let lhs = aggregate(&models, &mixed).unwrap();
        let a1 = aggregate(&models, &w1).unwrap();
        let a2 = aggregate(&models, &w2).unwrap();
        for ((l, x), y) in lhs.layers.iter().zip(&a1.layers).zip(&a2.layers) {
            for ((lv, &xv), &yv) in l.weight.data().iter().zip(x.weight.data()).zip(y.weight.data())
            {
                assert!((lv - (t * xv + (1.0 - t) * yv)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn aggregate_rejects_bad_weight_sums_and_shapes() {
        let spec = ModelSpec::new(2, vec![3], 2);
        let a = mlp_init(&spec, 1).unwrap();
        let b = mlp_init(&ModelSpec::new(2, vec![4], 2), 1).unwrap();
        assert!(aggregate(&[a.clone(), a.clone()], &[0.7, 0.7]).is_err());
        assert!(aggregate(&[a.clone(), b], &[0.5, 0.5]).is_err());
        assert!(aggregate(&[], &[]).is_err());
    }

    #[test]
    fn prox_penalty_examples() {
        let spec = ModelSpec::new(2, vec![3], 2);
        let w = mlp_init(&spec, 10).unwrap();
        let g = mlp_init(&spec, 11).unwrap();

        let (loss, grads) = prox_penalty(&w, &g, 0.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads
            .layers
            .iter()
            .all(|l| l.weight.data().iter().all(|&x| x == 0.0)));

        let (loss, grads) = prox_penalty(&w, &w, 0.5).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads
            .layers
            .iter()
            .all(|l| l.weight.data().iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn prox_penalty_single_parameter_arithmetic() {
        let spec = ModelSpec::new(1, vec![1], 2);
        let mut w = mlp_init(&spec, 0).unwrap();
        let mut g = mlp_init(&spec, 0).unwrap();
        for layer in &mut w.layers {
            for x in layer.weight.data_mut() {
                *x = 0.0;
            }
        }
        for layer in &mut g.layers {
            for x in layer.weight.data_mut() {
                *x = 0.0;
            }
        }
        w.layers[0].weight.data_mut()[0] = 1.0;
        let (loss, grads) = prox_penalty(&w, &g, 0.1).unwrap();
        assert!((loss - 0.05).abs() < 1e-15);
        assert!((grads.layers[0].weight.data()[0] - 0.1).abs() < 1e-15);
        assert!(grads.layers[1].weight.data().iter().all(|&x| x == 0.0));
    }
}
