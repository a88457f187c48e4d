//! Pointer scoring, domain-knowledge masking, and greedy/beam decoding.
//!
//! The pointer head scores every input point plus one extra slot (index m)
//! for the end-of-sequence sentinel. Masking adds `MASK_SCORE` to infeasible
//! slots; the task rules are:
//!
//! * DT: the end slot is only available when a triangle boundary has been
//!   reached (step i with i mod 3 = 1, counting from 1); at each triangle's
//!   third step a candidate is infeasible if it repeats one of the two
//!   pending vertices, forms a degenerate triangle, or forms a triangle
//!   whose circumcircle strictly contains any input point.
//! * Hull: already-emitted points are infeasible; from the fourth point on,
//!   a candidate whose turn disagrees with the orientation of the first
//!   three emitted points is infeasible; the end slot opens after three
//!   points.
//! * TSP: visited cities are infeasible and the end slot is infeasible until
//!   every city has been visited, after which only the end slot remains.

use super::encoder::{encode, EncoderOutput};
use super::ModelParams;
use crate::geometry::{in_circumcircle, orient2d, PointSet, Position, Tour};
use crate::nncore::{log_softmax, lstm_forward_step, matvec_accum, MASK_SCORE};
use crate::sequencing::TokenSequence;
use crate::Task;
use serde::{Deserialize, Serialize};

/// Decode-time mask bookkeeping.
#[derive(Debug, Clone)]
pub struct DecodeState {
    pub task: Task,
    pub m: usize,
    /// Emitted body tokens, in order.
    pub emitted: Vec<usize>,
    visited: Vec<bool>,
    /// Orientation of the first three emitted hull points (+1 CCW, -1 CW),
    /// 0 while undefined.
    hull_orientation: i8,
}

impl DecodeState {
    pub fn new(task: Task, m: usize) -> Self {
        DecodeState { task, m, emitted: Vec::new(), visited: vec![false; m], hull_orientation: 0 }
    }

    /// 1-based index of the step about to be decoded.
    pub fn step(&self) -> usize {
        self.emitted.len() + 1
    }

    pub fn push(&mut self, token: usize, points: &PointSet) {
        debug_assert!(token < self.m);
        self.emitted.push(token);
        self.visited[token] = true;
        if self.task == Task::Hull && self.emitted.len() == 3 && self.hull_orientation == 0 {
            let (a, b, c) = (self.emitted[0], self.emitted[1], self.emitted[2]);
            self.hull_orientation = match orient2d(points[a], points[b], points[c]) {
                crate::geometry::Orientation::Ccw => 1,
                crate::geometry::Orientation::Cw => -1,
                crate::geometry::Orientation::Collinear => 0,
            };
        }
    }
}

/// Raw pointer scores for one decoder state: `u_j = v . tanh(W1 e_j + W2 h)`
/// over the m points and the end sentinel (slot m).
pub fn pointer_scores(h_dec: &[f64], enc: &EncoderOutput, params: &ModelParams) -> Vec<f64> {
    let h = params.config.hidden;
    let mut w1e = vec![0.0; (enc.m + 1) * h];
    for j in 0..=enc.m {
        matvec_accum(
            &mut w1e[j * h..(j + 1) * h],
            &enc.rows[j * h..(j + 1) * h],
            params.ptr_w1.value.data(),
            h,
            h,
        );
    }
    scores_from_w1e(h_dec, &w1e, enc.m, params, None)
}

/// Inner scoring loop against a precomputed `W1 E` block. `t_cache`, when
/// given, receives the per-slot tanh vectors for the training backward pass.
pub(crate) fn scores_from_w1e(
    h_dec: &[f64],
    w1e: &[f64],
    m: usize,
    params: &ModelParams,
    mut t_cache: Option<&mut Vec<f64>>,
) -> Vec<f64> {
    let h = params.config.hidden;
    let mut w2h = vec![0.0; h];
    matvec_accum(&mut w2h, h_dec, params.ptr_w2.value.data(), h, h);
    let v = params.ptr_v.value.data();
    let mut scores = vec![0.0; m + 1];
    for j in 0..=m {
        let base = &w1e[j * h..(j + 1) * h];
        let mut s = 0.0;
        if let Some(cache) = t_cache.as_deref_mut() {
            for k in 0..h {
                let t = (base[k] + w2h[k]).tanh();
                cache.push(t);
                s += v[k] * t;
            }
        } else {
            for k in 0..h {
                s += v[k] * (base[k] + w2h[k]).tanh();
            }
        }
        scores[j] = s;
    }
    scores
}

/// Applies the task mask to raw scores. Returns the masked scores and the
/// per-slot feasibility flags (slot m is the end sentinel).
pub fn mask_scores(
    task: Task,
    state: &DecodeState,
    points: &PointSet,
    scores: &[f64],
) -> (Vec<f64>, Vec<bool>) {
    let m = state.m;
    debug_assert_eq!(scores.len(), m + 1);
    let mut feasible = vec![true; m + 1];
    let step = state.step();

    match task {
        Task::Dt => {
            if step % 3 != 1 {
                feasible[m] = false;
            }
            if step % 3 == 0 {
                let p = state.emitted[state.emitted.len() - 2];
                let q = state.emitted[state.emitted.len() - 1];
                for (j, slot) in feasible.iter_mut().enumerate().take(m) {
                    if j == p || j == q {
                        *slot = false;
                        continue;
                    }
                    match triangle_ok(points, p, q, j) {
                        true => {}
                        false => *slot = false,
                    }
                }
            }
        }
        Task::Hull => {
            for j in 0..m {
                if state.visited[j] {
                    feasible[j] = false;
                }
            }
            if state.emitted.len() < 3 {
                feasible[m] = false;
            }
            if state.emitted.len() >= 3 && state.hull_orientation != 0 {
                let prev2 = state.emitted[state.emitted.len() - 2];
                let prev1 = state.emitted[state.emitted.len() - 1];
                for (j, slot) in feasible.iter_mut().enumerate().take(m) {
                    if !*slot {
                        continue;
                    }
                    let turn: i8 = match orient2d(points[prev2], points[prev1], points[j]) {
                        crate::geometry::Orientation::Ccw => 1,
                        crate::geometry::Orientation::Cw => -1,
                        crate::geometry::Orientation::Collinear => 0,
                    };
                    if turn != state.hull_orientation {
                        *slot = false;
                    }
                }
            }
        }
        Task::Tsp => {
            let all_visited = state.emitted.len() == m;
            for j in 0..m {
                if state.visited[j] || all_visited {
                    feasible[j] = false;
                }
            }
            if !all_visited {
                feasible[m] = false;
            }
        }
    }

    let masked = scores
        .iter()
        .zip(&feasible)
        .map(|(&s, &ok)| if ok { s } else { s + MASK_SCORE })
        .collect();
    (masked, feasible)
}

/// Empty-circumcircle test for the candidate triangle (p, q, j): feasible iff
/// non-degenerate and no input point lies strictly inside.
fn triangle_ok(points: &PointSet, p: usize, q: usize, j: usize) -> bool {
    let (a, b, c) = (points[p], points[q], points[j]);
    for (idx, &pt) in points.points.iter().enumerate() {
        if idx == p || idx == q || idx == j {
            continue;
        }
        match in_circumcircle(a, b, c, pt) {
            Ok(Position::Inside) => return false,
            Ok(_) => {}
            Err(_) => return false, // degenerate candidate triangle
        }
    }
    // A triangle with no other points still needs to be non-degenerate.
    !matches!(orient2d(a, b, c), crate::geometry::Orientation::Collinear)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeamVariant {
    /// Highest joint probability among finished candidates.
    Joint,
    /// TSP only: shortest valid tour among finished candidates.
    ShortestTour,
}

impl std::str::FromStr for BeamVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "joint" => Ok(BeamVariant::Joint),
            "shortest" | "shortest_tour" => Ok(BeamVariant::ShortestTour),
            other => Err(format!("unknown beam variant {other:?} (expected joint or shortest)")),
        }
    }
}

/// Which decoder an evaluation should run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum DecoderChoice {
    Greedy,
    Beam { width: usize, variant: BeamVariant },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    pub seq: TokenSequence,
    /// Joint log-probability of the emitted sequence under the (masked)
    /// per-step distributions.
    pub log_prob: f64,
    /// Body positions whose token was chosen after an all-masked fallback
    /// (geometric constraints dropped for that step).
    pub fallback_positions: Vec<usize>,
    /// Steps where every slot was masked and raw scores were used instead.
    pub fallback_steps: usize,
    /// The decode hit the length limit before emitting the end token.
    pub truncated: bool,
}

/// Shared inference state: encoder output plus the precomputed `W1 E` block.
pub(crate) struct InferenceContext<'a> {
    pub params: &'a ModelParams,
    pub points: &'a PointSet,
    pub enc: EncoderOutput,
    pub w1e: Vec<f64>,
    pub m: usize,
}

impl<'a> InferenceContext<'a> {
    pub fn new(points: &'a PointSet, params: &'a ModelParams) -> Self {
        let enc = encode(points, params);
        let h = params.config.hidden;
        let m = enc.m;
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
        InferenceContext { params, points, enc, w1e, m }
    }

    fn scores(&self, h_dec: &[f64]) -> Vec<f64> {
        scores_from_w1e(h_dec, &self.w1e, self.m, self.params, None)
    }
}

/// Default body-length budget per task: a planar triangulation has fewer
/// than 2m triangles, and hull/TSP bodies never exceed m.
pub(crate) fn default_max_len(task: Task, m: usize) -> usize {
    match task {
        Task::Dt => 6 * m,
        Task::Hull | Task::Tsp => m,
    }
}

/// Whether the end slot is allowed purely by sequence structure (ignoring
/// geometric feasibility). The fallback path keeps this rule so even
/// fallback decodes stay structurally well-formed.
fn end_structurally_open(task: Task, state: &DecodeState) -> bool {
    match task {
        Task::Dt => state.step() % 3 == 1,
        Task::Hull => state.emitted.len() >= 3,
        Task::Tsp => state.emitted.len() == state.m,
    }
}

/// With masking on and the body budget reached, will the mask rules force
/// the end token on the very next step? DT budgets are enforced at triangle
/// boundaries; Hull/TSP close every index slot once all points are emitted.
fn mask_forces_end(task: Task, state: &DecodeState) -> bool {
    match task {
        Task::Dt => state.emitted.len() % 3 == 0,
        Task::Hull | Task::Tsp => state.emitted.len() == state.m,
    }
}

/// Masked scores plus the decode-budget rule: a masked DT decode whose next
/// triangle would overrun the body budget has its point slots closed, so the
/// sequence still ends on a triangle boundary. When every slot is masked
/// (possible for DT when the two pending vertices admit no empty-circle
/// third vertex), the geometric constraints are dropped for that step and
/// only the structural end rule is kept; the step is counted as a fallback.
fn effective_scores(
    ctx: &InferenceContext,
    state: &DecodeState,
    raw: &[f64],
    max_len: usize,
) -> (Vec<f64>, bool) {
    let config = &ctx.params.config;
    if !config.mask_enabled {
        return (raw.to_vec(), false);
    }
    let (mut masked, feasible) = mask_scores(config.task, state, ctx.points, raw);
    if config.task == Task::Dt
        && state.emitted.len() % 3 == 0
        && state.emitted.len() + 3 > max_len
    {
        // End is open at triangle boundaries; close everything else.
        for slot in masked.iter_mut().take(ctx.m) {
            *slot += MASK_SCORE;
        }
        return (masked, false);
    }
    if !feasible.iter().any(|&ok| ok) {
        let mut fb = raw.to_vec();
        if !end_structurally_open(config.task, state) {
            fb[ctx.m] += MASK_SCORE;
        }
        return (fb, true);
    }
    (masked, false)
}

/// Greedy decoding: argmax token per step under masking, lowest index on
/// ties, stopping at the end token or the length budget.
pub fn greedy_decode(
    points: &PointSet,
    params: &ModelParams,
    max_len: Option<usize>,
) -> DecodeOutcome {
    let config = &params.config;
    let ctx = InferenceContext::new(points, params);
    let m = ctx.m;
    let max_len = max_len.unwrap_or_else(|| default_max_len(config.task, m));

    let mut state = DecodeState::new(config.task, m);
    let mut h = ctx.enc.final_h.clone();
    let mut c = ctx.enc.final_c.clone();
    let mut input = params.start_input();
    let mut log_prob = 0.0;
    let mut fallback_positions = Vec::new();
    let mut truncated = false;

    loop {
        // At the body budget, masked decoding usually forces the end token
        // on the next step; when it cannot (mask off, or a custom budget cut
        // the sequence mid-structure), truncate.
        if state.emitted.len() >= max_len
            && !(config.mask_enabled && mask_forces_end(config.task, &state))
        {
            truncated = true;
            break;
        }
        let (nh, nc, _) = lstm_forward_step(&params.dec, &input, &h, &c)
            .expect("decoder shapes are fixed by construction");
        h = nh;
        c = nc;
        let raw = ctx.scores(&h);
        let (eff, fell_back) = effective_scores(&ctx, &state, &raw, max_len);
        if fell_back {
            fallback_positions.push(state.emitted.len());
        }
        let lp = log_softmax(&eff).expect("effective scores always leave a feasible slot");
        let pick = argmax(&eff);
        log_prob += lp[pick];
        if pick == m {
            break;
        }
        state.push(pick, points);
        debug_assert!(state.emitted.len() <= max_len);
        input = params.embed_point(points[pick].x, points[pick].y);
    }

    DecodeOutcome {
        seq: TokenSequence::from_body(&state.emitted),
        log_prob,
        fallback_steps: fallback_positions.len(),
        fallback_positions,
        truncated,
    }
}

struct Beam {
    state: DecodeState,
    h: Vec<f64>,
    c: Vec<f64>,
    log_prob: f64,
    fallback_positions: Vec<usize>,
}

struct Finished {
    tokens: Vec<usize>,
    log_prob: f64,
    fallback_positions: Vec<usize>,
    truncated: bool,
}

/// Beam search over masked per-step distributions, keeping the `width` best
/// prefixes by summed log-probability (no length normalization). Finished
/// sequences occupy beam slots, so width 1 reproduces greedy decoding
/// exactly. `Joint` returns the finished sequence with the highest joint
/// probability; `ShortestTour` (TSP) the valid finished tour of minimum
/// length, falling back to `Joint` if no finished candidate is a valid tour.
pub fn beam_decode(
    points: &PointSet,
    params: &ModelParams,
    width: usize,
    variant: BeamVariant,
    max_len: Option<usize>,
) -> DecodeOutcome {
    assert!(width >= 1, "beam width must be at least 1");
    let config = &params.config;
    let ctx = InferenceContext::new(points, params);
    let m = ctx.m;
    let max_len = max_len.unwrap_or_else(|| default_max_len(config.task, m));

    let mut active = vec![Beam {
        state: DecodeState::new(config.task, m),
        h: ctx.enc.final_h.clone(),
        c: ctx.enc.final_c.clone(),
        log_prob: 0.0,
        fallback_positions: Vec::new(),
    }];
    let mut finished: Vec<Finished> = Vec::new();

    while !active.is_empty() {
        // (log_prob, tokens, origin beam, chosen slot, fallback positions)
        let mut candidates: Vec<(f64, Vec<usize>, usize, usize, Vec<usize>)> = Vec::new();
        let mut stepped: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(active.len());
        for (bi, beam) in active.iter().enumerate() {
            let input = match beam.state.emitted.last() {
                None => params.start_input(),
                Some(&tok) => params.embed_point(points[tok].x, points[tok].y),
            };
            let (nh, nc, _) = lstm_forward_step(&params.dec, &input, &beam.h, &beam.c)
                .expect("decoder shapes are fixed by construction");
            let raw = ctx.scores(&nh);
            let (eff, fell_back) = effective_scores(&ctx, &beam.state, &raw, max_len);
            let mut fb = beam.fallback_positions.clone();
            if fell_back {
                fb.push(beam.state.emitted.len());
            }
            let lp = log_softmax(&eff).expect("effective scores always leave a feasible slot");
            for (j, &lpj) in lp.iter().enumerate() {
                if lpj <= MASK_SCORE / 2.0 {
                    continue; // masked slot
                }
                let mut tokens = beam.state.emitted.clone();
                if j < m {
                    tokens.push(j);
                }
                candidates.push((beam.log_prob + lpj, tokens, bi, j, fb.clone()));
            }
            stepped.push((nh, nc));
        }

        // Best first; ties resolve toward the lowest slot index (matching
        // greedy's argmax), then the lexicographically smaller sequence.
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then_with(|| a.3.cmp(&b.3))
                .then_with(|| a.1.cmp(&b.1))
        });
        candidates.truncate(width);

        let mut next_active = Vec::new();
        for (log_prob, tokens, bi, slot, fb) in candidates {
            if slot == m {
                finished.push(Finished {
                    tokens,
                    log_prob,
                    fallback_positions: fb,
                    truncated: false,
                });
                continue;
            }
            let mut state = active[bi].state.clone();
            state.push(slot, points);
            if state.emitted.len() >= max_len
                && !(config.mask_enabled && mask_forces_end(config.task, &state))
            {
                finished.push(Finished {
                    tokens,
                    log_prob,
                    fallback_positions: fb,
                    truncated: true,
                });
                continue;
            }
            next_active.push(Beam {
                state,
                h: stepped[bi].0.clone(),
                c: stepped[bi].1.clone(),
                log_prob,
                fallback_positions: fb,
            });
        }
        active = next_active;
    }

    debug_assert!(!finished.is_empty());
    let joint_best = |pool: &[Finished]| -> usize {
        let mut best = 0;
        for (k, f) in pool.iter().enumerate() {
            let b = &pool[best];
            if f.log_prob > b.log_prob
                || (f.log_prob == b.log_prob && f.tokens < b.tokens)
            {
                best = k;
            }
        }
        best
    };

    let chosen = match variant {
        BeamVariant::Joint => joint_best(&finished),
        BeamVariant::ShortestTour => {
            let mut best: Option<(usize, f64)> = None;
            for (k, f) in finished.iter().enumerate() {
                let tour = Tour::new(f.tokens.clone());
                if !tour.is_valid(m) {
                    continue;
                }
                let len = crate::geometry::tour_length(points, &tour).unwrap();
                match best {
                    Some((_, blen)) if blen <= len => {}
                    _ => best = Some((k, len)),
                }
            }
            best.map(|(k, _)| k).unwrap_or_else(|| joint_best(&finished))
        }
    };
    let f = &finished[chosen];
    DecodeOutcome {
        seq: TokenSequence::from_body(&f.tokens),
        log_prob: f.log_prob,
        fallback_steps: f.fallback_positions.len(),
        fallback_positions: f.fallback_positions.clone(),
        truncated: f.truncated,
    }
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (j, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = j;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::super::{ModelConfig, ModelParams};
    use super::*;
    use crate::geometry::Point;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params_for(task: Task, seed: u64) -> ModelParams {
        ModelParams::init(ModelConfig::new(task).with_hidden(8), seed).unwrap()
    }

    fn random_points(m: usize, seed: u64) -> PointSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointSet::new((0..m).map(|_| Point::new(rng.gen(), rng.gen())).collect())
    }

    #[test]
    fn pointer_scores_shape_and_uniformity() {
        let mut params = params_for(Task::Tsp, 1);
        let ps = random_points(5, 2);
        let enc = encode(&ps, &params);
        let h = vec![0.1; 8];
        let scores = pointer_scores(&h, &enc, &params);
        assert_eq!(scores.len(), 6);

        params.ptr_v.value.fill(0.0);
        let scores = pointer_scores(&h, &enc, &params);
        assert!(scores.iter().all(|&s| s == 0.0), "zero v gives uniform scores");
    }

    #[test]
    fn dt_mask_end_slot_outside_boundaries() {
        let ps = random_points(5, 3);
        let mut state = DecodeState::new(Task::Dt, 5);
        let raw = vec![0.0; 6];
        // Step 1: end open (empty triangulation is representable).
        let (_, feasible) = mask_scores(Task::Dt, &state, &ps, &raw);
        assert!(feasible[5]);
        state.push(0, &ps);
        // Step 2: i mod 3 = 2, end closed.
        let (masked, feasible) = mask_scores(Task::Dt, &state, &ps, &raw);
        assert!(!feasible[5]);
        assert!(masked[5] <= MASK_SCORE);
    }

    #[test]
    fn dt_mask_incircle_rule() {
        // Unit square plus center: triangle (0, 1, 2) = ((0,0),(1,0),(1,1))
        // has the center strictly inside its circumcircle, so slot 2 must be
        // infeasible at the third step; the fan triangle through the center
        // (slot 4) stays feasible.
        let ps = PointSet::from_pairs(&[
            (0.0, 0.0),
            (1.0, 0.0),
            (1.0, 1.0),
            (0.0, 1.0),
            (0.5, 0.5),
        ]);
        let mut state = DecodeState::new(Task::Dt, 5);
        state.push(0, &ps);
        state.push(1, &ps);
        let raw = vec![0.0; 6];
        let (_, feasible) = mask_scores(Task::Dt, &state, &ps, &raw);
        assert!(!feasible[0], "repeats a pending vertex");
        assert!(!feasible[1], "repeats a pending vertex");
        assert!(!feasible[2], "circumcircle contains the center");
        assert!(!feasible[3], "circumcircle contains the center");
        assert!(feasible[4], "the fan triangle is Delaunay");
        assert!(!feasible[5], "end slot closed mid-triangle");
    }

    #[test]
    fn tsp_mask_visited_and_end_rules() {
        let ps = random_points(4, 4);
        let mut state = DecodeState::new(Task::Tsp, 4);
        let raw = vec![0.0; 5];
        let (_, feasible) = mask_scores(Task::Tsp, &state, &ps, &raw);
        assert!(!feasible[4], "end closed before all cities");
        state.push(2, &ps);
        let (_, feasible) = mask_scores(Task::Tsp, &state, &ps, &raw);
        assert!(!feasible[2], "visited city masked");
        assert!(feasible[0] && feasible[1] && feasible[3]);
        for t in [0, 1, 3] {
            state.push(t, &ps);
        }
        let (_, feasible) = mask_scores(Task::Tsp, &state, &ps, &raw);
        assert!(feasible[4], "end opens once all cities are visited");
        assert!(!feasible[..4].iter().any(|&f| f), "city slots closed at the end");
    }

    #[test]
    fn hull_mask_orientation_rule() {
        // Square corners plus an interior point. Walking 0 -> 1 establishes
        // CCW; detouring to the interior point makes both remaining corners
        // clockwise turns, so they get masked and only End stays open.
        let ps = PointSet::from_pairs(&[
            (0.0, 0.0),
            (1.0, 0.0),
            (1.0, 1.0),
            (0.0, 1.0),
            (0.4, 0.5),
        ]);
        let mut state = DecodeState::new(Task::Hull, 5);
        let raw = vec![0.0; 6];
        state.push(0, &ps);
        state.push(1, &ps);
        let (_, feasible) = mask_scores(Task::Hull, &state, &ps, &raw);
        assert!(!feasible[5], "end closed before three points");
        assert!(!feasible[0] && !feasible[1], "visited masked");

        let mut on_hull = state.clone();
        on_hull.push(2, &ps);
        let (_, feasible) = mask_scores(Task::Hull, &on_hull, &ps, &raw);
        assert!(feasible[5], "end open after three points");
        assert!(feasible[3], "CCW-consistent candidate allowed");
        assert!(feasible[4], "interior point is still a CCW turn here");

        let mut detoured = state.clone();
        detoured.push(4, &ps);
        let (_, feasible) = mask_scores(Task::Hull, &detoured, &ps, &raw);
        assert!(!feasible[2], "corner after the detour is a CW turn");
        assert!(!feasible[3], "corner after the detour is a CW turn");
        assert!(feasible[5], "only the end token remains");
    }

    #[test]
    fn masked_decodes_satisfy_task_guarantees() {
        for (task, m) in [(Task::Dt, 6), (Task::Hull, 6), (Task::Tsp, 6)] {
            for seed in 0..10u64 {
                let params = params_for(task, seed);
                let ps = random_points(m, 100 + seed);
                let out = greedy_decode(&ps, &params, None);
                assert!(!out.truncated);
                let body = out.seq.body_indices();
                match task {
                    Task::Dt => {
                        assert_eq!(body.len() % 3, 0, "DT body must be whole triangles");
                        if out.fallback_steps == 0 {
                            for t in body.chunks_exact(3) {
                                for q in 0..m {
                                    if t.contains(&q) {
                                        continue;
                                    }
                                    let pos = in_circumcircle(
                                        ps[t[0]], ps[t[1]], ps[t[2]], ps[q],
                                    )
                                    .unwrap();
                                    assert_ne!(pos, Position::Inside);
                                }
                            }
                        }
                    }
                    Task::Hull => {
                        let mut seen = vec![false; m];
                        for &i in &body {
                            assert!(!seen[i], "hull decode repeated an index");
                            seen[i] = true;
                        }
                    }
                    Task::Tsp => {
                        assert!(Tour::new(body).is_valid(m), "TSP decode must be a tour");
                    }
                }
            }
        }
    }

    #[test]
    fn beam_width_one_equals_greedy() {
        for (task, seed) in [(Task::Dt, 5u64), (Task::Hull, 6), (Task::Tsp, 7)] {
            let params = params_for(task, seed);
            let ps = random_points(6, 200 + seed);
            let g = greedy_decode(&ps, &params, None);
            let b = beam_decode(&ps, &params, 1, BeamVariant::Joint, None);
            assert_eq!(g.seq, b.seq);
            assert!((g.log_prob - b.log_prob).abs() < 1e-12);
        }
    }

    #[test]
    fn shortest_tour_never_longer_than_joint() {
        for seed in 0..8u64 {
            let params = params_for(Task::Tsp, seed);
            let ps = random_points(7, 300 + seed);
            let joint = beam_decode(&ps, &params, 4, BeamVariant::Joint, None);
            let shortest = beam_decode(&ps, &params, 4, BeamVariant::ShortestTour, None);
            let len = |o: &DecodeOutcome| {
                crate::geometry::tour_length(&ps, &Tour::new(o.seq.body_indices())).unwrap()
            };
            assert!(len(&shortest) <= len(&joint) + 1e-12);
        }
    }
}
