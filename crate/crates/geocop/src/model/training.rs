//! Teacher-forced training: per-instance forward/backward passes, batched
//! steps with deterministic gradient reduction, and the epoch loop.
//!
//! Batches are processed in fixed-size chunks. Workers accumulate gradients
//! into a private copy and the per-chunk results are summed in chunk order,
//! so a training run is bit-identical regardless of thread count.

use super::decoder::{mask_scores, scores_from_w1e, DecodeState};
use super::encoder::{embed_backward, encode, encoder_backward, EncoderOutput};
use super::{ModelError, ModelParams, StartToken};
use crate::dataset::Instance;
use crate::nncore::{
    add_accum, cross_entropy, log_softmax, lstm_backward_step, lstm_forward_step, matvec_accum,
    matvec_t_accum, outer_accum, AdamState, LstmStepCache, Tensor,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Instances per worker unit. Fixed so gradient summation order (and thus
/// the result) does not depend on the thread count.
const REDUCE_CHUNK: usize = 8;

struct StepTrace {
    input: Vec<f64>,
    lstm_cache: LstmStepCache,
    /// tanh(W1 e_j + W2 h_i) for every slot, `(m + 1) x H`.
    t: Vec<f64>,
    /// Cross-entropy gradient w.r.t. the step scores, `p - one_hot(target)`.
    dscores: Vec<f64>,
}

struct ForwardTrace {
    enc: EncoderOutput,
    /// Decoder hidden/cell states, `(L + 1) x H`; row 0 is the encoder
    /// final state.
    dec_hs: Vec<f64>,
    dec_cs: Vec<f64>,
    steps: Vec<StepTrace>,
    loss: f64,
}

/// Teacher-forced forward pass for one instance: summed per-step
/// cross-entropy of the label tokens under (optionally masked) pointer
/// distributions. Fails with `LabelMasked` if a label token is infeasible
/// under the mask, which would mean oracle and mask disagree.
fn forward_instance(params: &ModelParams, inst: &Instance) -> Result<ForwardTrace, ModelError> {
    let config = &params.config;
    let points = &inst.points;
    let m = points.len();
    let h = config.hidden;
    let body = inst.label.body_indices();
    let n_steps = body.len() + 1;

    let enc = encode(points, params);
    let mut w1e = vec![0.0; (m + 1) * h];
    for j in 0..=m {
        matvec_accum(
            &mut w1e[j * h..(j + 1) * h],
            &enc.rows[j * h..(j + 1) * h],
            params.ptr_w1.value.data(),
            h,
            h,
        );
    }

    let mut dec_hs = vec![0.0; (n_steps + 1) * h];
    let mut dec_cs = vec![0.0; (n_steps + 1) * h];
    dec_hs[..h].copy_from_slice(&enc.final_h);
    dec_cs[..h].copy_from_slice(&enc.final_c);

    let mut state = DecodeState::new(config.task, m);
    let mut steps = Vec::with_capacity(n_steps);
    let mut loss = 0.0;

    for i in 1..=n_steps {
        let input = if i == 1 {
            params.start_input()
        } else {
            let p = points[body[i - 2]];
            params.embed_point(p.x, p.y)
        };
        let (nh, nc, lstm_cache) = lstm_forward_step(
            &params.dec,
            &input,
            &dec_hs[(i - 1) * h..i * h].to_vec(),
            &dec_cs[(i - 1) * h..i * h].to_vec(),
        )?;
        dec_hs[i * h..(i + 1) * h].copy_from_slice(&nh);
        dec_cs[i * h..(i + 1) * h].copy_from_slice(&nc);

        let mut t = Vec::with_capacity((m + 1) * h);
        let raw = scores_from_w1e(&nh, &w1e, m, params, Some(&mut t));
        let target = if i <= body.len() { body[i - 1] } else { m };
        let eff = if config.mask_enabled {
            let (masked, feasible) = mask_scores(config.task, &state, points, &raw);
            if !feasible[target] {
                return Err(ModelError::LabelMasked { step: i, token: target });
            }
            masked
        } else {
            raw
        };
        let lp = log_softmax(&eff)?;
        let (step_loss, dscores) = cross_entropy(&lp, target)?;
        loss += step_loss;
        steps.push(StepTrace { input, lstm_cache, t, dscores });
        if i <= body.len() {
            state.push(body[i - 1], points);
        }
    }

    Ok(ForwardTrace { enc, dec_hs, dec_cs, steps, loss })
}

/// Backward pass matching [`forward_instance`], accumulating `scale` times
/// the gradient of this instance's summed loss into the parameter grads.
fn backward_instance(params: &mut ModelParams, inst: &Instance, trace: &ForwardTrace, scale: f64) {
    let points = &inst.points;
    let m = points.len();
    let h = params.config.hidden;
    let body = inst.label.body_indices();
    let n_steps = trace.steps.len();

    let v_vals = params.ptr_v.value.data().to_vec();
    let mut ds_w1e = vec![0.0; (m + 1) * h];
    let mut dh = vec![0.0; h];
    let mut dc = vec![0.0; h];

    for i in (1..=n_steps).rev() {
        let sd = &trace.steps[i - 1];
        let h_i = &trace.dec_hs[i * h..(i + 1) * h];

        // Pointer head backward. Masked slots have exactly zero probability
        // and zero gradient, so they can be skipped outright.
        let mut dw2h = vec![0.0; h];
        {
            let vg = params.ptr_v.grad.data_mut();
            for j in 0..=m {
                let g = sd.dscores[j] * scale;
                if g == 0.0 {
                    continue;
                }
                let tj = &sd.t[j * h..(j + 1) * h];
                let dsj = &mut ds_w1e[j * h..(j + 1) * h];
                for k in 0..h {
                    let t = tj[k];
                    vg[k] += g * t;
                    let dpre = g * v_vals[k] * (1.0 - t * t);
                    dsj[k] += dpre;
                    dw2h[k] += dpre;
                }
            }
        }
        outer_accum(params.ptr_w2.grad.data_mut(), h_i, &dw2h, h, h);
        matvec_t_accum(&mut dh, &dw2h, params.ptr_w2.value.data(), h, h);

        let mut dx = vec![0.0; h];
        let mut dh_prev = vec![0.0; h];
        let mut dc_prev = vec![0.0; h];
        lstm_backward_step(
            &mut params.dec,
            &sd.input,
            &trace.dec_hs[(i - 1) * h..i * h],
            &trace.dec_cs[(i - 1) * h..i * h],
            &sd.lstm_cache,
            &dh,
            &dc,
            &mut dx,
            &mut dh_prev,
            &mut dc_prev,
        );
        if i == 1 {
            if params.config.start_token == StartToken::Learned {
                add_accum(params.start_emb.grad.data_mut(), &dx);
            }
        } else {
            embed_backward(&mut params.emb_w, &mut params.emb_b, points, body[i - 2], &dx, h);
        }
        dh = dh_prev;
        dc = dc_prev;
    }

    // W1 path, aggregated over steps, then back into the encoder rows.
    let mut d_rows = vec![0.0; (m + 1) * h];
    for j in 0..=m {
        let dsj = &ds_w1e[j * h..(j + 1) * h];
        outer_accum(
            params.ptr_w1.grad.data_mut(),
            &trace.enc.rows[j * h..(j + 1) * h],
            dsj,
            h,
            h,
        );
        matvec_t_accum(
            &mut d_rows[j * h..(j + 1) * h],
            dsj,
            params.ptr_w1.value.data(),
            h,
            h,
        );
    }
    encoder_backward(params, points, &trace.enc, &d_rows, &dh, &dc);
}

/// Runs forward and backward over a batch, leaving the batch-mean gradient
/// in the parameter grads without touching the weights. Returns the mean
/// loss. This is the input to finite-difference gradient checking.
pub fn accumulate_gradients(
    batch: &[Instance],
    params: &mut ModelParams,
) -> Result<f64, ModelError> {
    assert!(!batch.is_empty());
    params.zero_grads();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for inst in batch {
        let trace = forward_instance(params, inst)?;
        loss += trace.loss;
        backward_instance(params, inst, &trace, scale);
    }
    Ok(loss * scale)
}

/// Mean teacher-forced loss of a batch, instance-parallel with a fixed
/// reduction order.
pub fn forward_loss(batch: &[Instance], params: &ModelParams) -> Result<f64, ModelError> {
    let losses: Result<Vec<f64>, ModelError> = batch
        .par_chunks(REDUCE_CHUNK)
        .map(|chunk| {
            let mut sum = 0.0;
            for inst in chunk {
                sum += forward_instance(params, inst)?.loss;
            }
            Ok(sum)
        })
        .collect();
    Ok(losses?.iter().sum::<f64>() / batch.len() as f64)
}

/// One optimizer step on a batch: forward, backward, deterministic gradient
/// reduction, Adam update. Returns the pre-update mean loss.
pub fn train_step(
    batch: &[Instance],
    params: &mut ModelParams,
    adam: &mut AdamState,
) -> Result<f64, ModelError> {
    assert!(!batch.is_empty());
    let scale = 1.0 / batch.len() as f64;

    let results: Result<Vec<(f64, Vec<Tensor>)>, ModelError> = {
        let shared: &ModelParams = params;
        batch
            .par_chunks(REDUCE_CHUNK)
            .map(|chunk| {
                let mut local = shared.clone();
                local.zero_grads();
                let mut loss = 0.0;
                for inst in chunk {
                    let trace = forward_instance(&local, inst)?;
                    loss += trace.loss;
                    backward_instance(&mut local, inst, &trace, scale);
                }
                let grads = local.params_mut().iter().map(|p| p.grad.clone()).collect();
                Ok((loss, grads))
            })
            .collect()
    };

    let mut total_loss = 0.0;
    {
        let mut live = params.params_mut();
        for (chunk_loss, grads) in results? {
            total_loss += chunk_loss;
            assert_eq!(grads.len(), live.len());
            for (p, g) in live.iter_mut().zip(&grads) {
                add_accum(p.grad.data_mut(), g.data());
            }
        }
    }
    adam.step(&mut params.params_mut());
    Ok(total_loss * scale)
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub epochs: usize,
    /// Seed for the per-epoch shuffle of the training order.
    pub shuffle_seed: u64,
    pub shuffle: bool,
    /// Record every n-th step in the loss curve (0 disables recording).
    pub record_loss_every: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { epochs: 1, shuffle_seed: 0, shuffle: true, record_loss_every: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct EpochReport {
    pub epoch: usize,
    pub steps_done: usize,
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub steps: usize,
    pub epochs_run: usize,
    pub final_epoch_loss: f64,
    /// (global step, batch loss) samples.
    pub loss_curve: Vec<(usize, f64)>,
    pub stopped_early: bool,
}

/// Epoch loop over `data` with seeded shuffling. `on_epoch` runs after each
/// epoch and may stop training by returning `false` (the hook for
/// validation-based stopping rules).
pub fn train(
    params: &mut ModelParams,
    adam: &mut AdamState,
    data: &[Instance],
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochReport, &mut ModelParams) -> bool,
) -> Result<TrainSummary, ModelError> {
    let batch_size = params.config.batch_size;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::new();
    let mut steps = 0usize;
    let mut epochs_run = 0usize;
    let mut final_epoch_loss = f64::NAN;
    let mut stopped_early = false;

    'outer: for epoch in 0..opts.epochs {
        if opts.shuffle {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.shuffle_seed);
            rng.set_stream(epoch as u64);
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        let mut epoch_steps = 0usize;
        let mut batch: Vec<Instance> = Vec::with_capacity(batch_size);
        for start in (0..order.len()).step_by(batch_size) {
            batch.clear();
            for &idx in &order[start..(start + batch_size).min(order.len())] {
                batch.push(data[idx].clone());
            }
            let loss = train_step(&batch, params, adam)?;
            steps += 1;
            epoch_steps += 1;
            epoch_loss += loss;
            if opts.record_loss_every > 0 && steps % opts.record_loss_every == 0 {
                curve.push((steps, loss));
            }
        }
        epochs_run = epoch + 1;
        final_epoch_loss = epoch_loss / epoch_steps.max(1) as f64;
        let report = EpochReport { epoch, steps_done: steps, mean_loss: final_epoch_loss };
        if !on_epoch(&report, params) {
            stopped_early = true;
            break 'outer;
        }
    }

    Ok(TrainSummary {
        steps,
        epochs_run,
        final_epoch_loss,
        loss_curve: curve,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{ModelConfig, ModelParams};
    use super::*;
    use crate::dataset::{generate, GenOptions, Ordering};
    use crate::nncore::grad_check;
    use crate::sequencing::TokenSequence;
    use crate::Task;

    fn instances(task: Task, m: usize, count: usize, seed: u64) -> Vec<Instance> {
        generate(task, m, count, seed, Ordering::Sorted, GenOptions::default())
            .unwrap()
            .instances
    }

    #[test]
    fn uniform_model_loss_is_log_vocab() {
        // Zero pointer v means all scores are 0; without masking every step
        // is uniform over m + 1 slots.
        let mut config = ModelConfig::new(Task::Dt).with_hidden(8);
        config.mask_enabled = false;
        let mut params = ModelParams::init(config, 1).unwrap();
        params.ptr_v.value.fill(0.0);
        let data = instances(Task::Dt, 5, 3, 2);
        for inst in &data {
            let trace = forward_instance(&params, inst).unwrap();
            let expect = (inst.label.body_len() + 1) as f64 * 6.0f64.ln();
            assert!((trace.loss - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn masked_labels_are_always_feasible() {
        for task in [Task::Dt, Task::Hull, Task::Tsp] {
            let config = ModelConfig::new(task).with_hidden(8);
            let params = ModelParams::init(config, 3).unwrap();
            for inst in instances(task, 6, 10, 4) {
                forward_instance(&params, &inst).unwrap();
            }
        }
    }

    #[test]
    fn corrupt_label_hits_label_masked() {
        let config = ModelConfig::new(Task::Tsp).with_hidden(8);
        let params = ModelParams::init(config, 5).unwrap();
        let mut inst = instances(Task::Tsp, 5, 1, 6).remove(0);
        // Repeat the first city; the visited mask must reject it.
        let mut body = inst.label.body_indices();
        body[2] = body[0];
        inst.label = TokenSequence::from_body(&body);
        assert!(matches!(
            forward_instance(&params, &inst),
            Err(ModelError::LabelMasked { .. })
        ));
    }

    struct GradCtx {
        params: ModelParams,
        batch: Vec<Instance>,
    }

    #[test]
    fn full_model_gradient_matches_finite_differences() {
        for (task, self_attention, start) in [
            (Task::Dt, true, StartToken::Zero),
            (Task::Tsp, true, StartToken::Learned),
            (Task::Hull, false, StartToken::Zero),
        ] {
            let mut config = ModelConfig::new(task).with_hidden(4);
            config.self_attention = self_attention;
            config.start_token = start;
            let mut params = ModelParams::init(config, 7).unwrap();
            let batch = instances(task, 4, 2, 8);

            params.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            for inst in &batch {
                let trace = forward_instance(&params, inst).unwrap();
                backward_instance(&mut params, inst, &trace, scale);
            }
            let mut ctx = GradCtx { params, batch };
            let err = grad_check(
                &mut ctx,
                |c| c.params.params_mut(),
                |c| forward_loss(&c.batch, &c.params).unwrap(),
                1e-5,
                10_000,
            );
            assert!(err < 1e-4, "task {task:?}: fd error {err}");
        }
    }

    #[test]
    fn overfit_small_batch() {
        let mut config = ModelConfig::new(Task::Dt).with_hidden(32);
        config.batch_size = 4;
        config.lr = 0.005;
        let mut params = ModelParams::init(config, 9).unwrap();
        let batch = instances(Task::Dt, 5, 4, 10);
        let mut adam = AdamState::new(config.lr, config.beta1, config.beta2);
        let initial = forward_loss(&batch, &params).unwrap();
        let mut last = initial;
        for _ in 0..200 {
            last = train_step(&batch, &mut params, &mut adam).unwrap();
        }
        assert!(
            last < 0.1 * initial,
            "loss {last} did not fall below 10% of initial {initial}"
        );
    }

    #[test]
    fn zero_lr_leaves_params_unchanged() {
        let config = ModelConfig::new(Task::Tsp).with_hidden(8);
        let mut params = ModelParams::init(config, 11).unwrap();
        let before = params.clone();
        let mut adam = AdamState::new(0.0, config.beta1, config.beta2);
        let batch = instances(Task::Tsp, 5, 4, 12);
        train_step(&batch, &mut params, &mut adam).unwrap();
        for (a, b) in params.params_mut().iter().zip(before.clone().params_mut()) {
            assert_eq!(a.value, b.value, "{} moved with zero lr", a.name);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut config = ModelConfig::new(Task::Tsp).with_hidden(8);
            config.batch_size = 8;
            let mut params = ModelParams::init(config, 13).unwrap();
            let mut adam = AdamState::new(config.lr, config.beta1, config.beta2);
            let data = instances(Task::Tsp, 5, 32, 14);
            let opts = TrainOptions { epochs: 2, shuffle_seed: 1, ..Default::default() };
            train(&mut params, &mut adam, &data, &opts, |_, _| true)
                .unwrap()
                .loss_curve
        };
        assert_eq!(run(), run());
    }
}
