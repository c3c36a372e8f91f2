//! Single-step LSTM and GRU cell evaluation.
//!
//! Both cells act on the concatenation `a = [H_{t-1}, X_t]`:
//!
//! LSTM: `f = σ(W_f a + b_f)`, `i = σ(W_i a + b_i)`, `k = tanh(W_k a + b_k)`,
//! `o = σ(W_o a + b_o)`, `C_t = f ⊙ C_{t-1} + i ⊙ k`, `H_t = o ⊙ tanh(C_t)`.
//!
//! GRU: `r = σ(W_r a + b_r)`, `u = σ(W_u a + b_u)`,
//! `h̃ = tanh(W_h [r ⊙ H_{t-1}, X_t] + b_h)`, `H_t = (1−u) ⊙ H_{t-1} + u ⊙ h̃`.
//!
//! The `*_cached` variants keep every intermediate activation for
//! backpropagation through time.

use ndarray::{Array1, ArrayView1};

use super::{CellState, GruCellParams, LstmCellParams};
use crate::error::{Error, Result};

pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn concat(h: ArrayView1<'_, f64>, x: ArrayView1<'_, f64>) -> Array1<f64> {
    let mut a = Array1::zeros(h.len() + x.len());
    a.slice_mut(ndarray::s![..h.len()]).assign(&h);
    a.slice_mut(ndarray::s![h.len()..]).assign(&x);
    a
}

/// Everything an LSTM step computes, kept for the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct LstmStepCache {
    /// `[H_{t-1}, X_t]`
    pub concat: Array1<f64>,
    pub c_prev: Array1<f64>,
    pub forget: Array1<f64>,
    pub input: Array1<f64>,
    pub cand: Array1<f64>,
    pub output: Array1<f64>,
    pub c: Array1<f64>,
    pub tanh_c: Array1<f64>,
    pub h: Array1<f64>,
}

pub(crate) fn lstm_step_cached(
    params: &LstmCellParams,
    x: ArrayView1<'_, f64>,
    prev_h: ArrayView1<'_, f64>,
    prev_c: ArrayView1<'_, f64>,
) -> Result<LstmStepCache> {
    let hidden = params.hidden_width();
    if x.len() != params.input_width() {
        return Err(Error::shape(format!(
            "lstm step expects {} inputs, got {}",
            params.input_width(),
            x.len()
        )));
    }
    if prev_h.len() != hidden || prev_c.len() != hidden {
        return Err(Error::shape(format!(
            "lstm state width {}/{} does not match hidden width {}",
            prev_h.len(),
            prev_c.len(),
            hidden
        )));
    }
    let a = concat(prev_h, x);
    let forget = (params.w_forget.dot(&a) + &params.b_forget).mapv(sigmoid);
    let input = (params.w_input.dot(&a) + &params.b_input).mapv(sigmoid);
    let cand = (params.w_cand.dot(&a) + &params.b_cand).mapv(f64::tanh);
    let output = (params.w_output.dot(&a) + &params.b_output).mapv(sigmoid);
    let c = &forget * &prev_c + &input * &cand;
    let tanh_c = c.mapv(f64::tanh);
    let h = &output * &tanh_c;
    Ok(LstmStepCache {
        concat: a,
        c_prev: prev_c.to_owned(),
        forget,
        input,
        cand,
        output,
        c,
        tanh_c,
        h,
    })
}

/// One LSTM step: consumes the previous state (hidden + memory), returns the
/// new one.
pub fn lstm_step(params: &LstmCellParams, x: ArrayView1<'_, f64>, prev: &CellState) -> Result<CellState> {
    let memory = prev
        .memory
        .as_ref()
        .ok_or_else(|| Error::domain("lstm step requires a memory vector in the previous state"))?;
    let cache = lstm_step_cached(params, x, prev.hidden.view(), memory.view())?;
    Ok(CellState {
        hidden: cache.h,
        memory: Some(cache.c),
    })
}

/// Everything a GRU step computes, kept for the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct GruStepCache {
    /// `[H_{t-1}, X_t]`
    pub concat: Array1<f64>,
    /// `[r ⊙ H_{t-1}, X_t]` — the candidate path's input
    pub concat_reset: Array1<f64>,
    pub h_prev: Array1<f64>,
    pub reset: Array1<f64>,
    pub update: Array1<f64>,
    pub cand: Array1<f64>,
    pub h: Array1<f64>,
}

pub(crate) fn gru_step_cached(
    params: &GruCellParams,
    x: ArrayView1<'_, f64>,
    prev_h: ArrayView1<'_, f64>,
) -> Result<GruStepCache> {
    let hidden = params.hidden_width();
    if x.len() != params.input_width() {
        return Err(Error::shape(format!(
            "gru step expects {} inputs, got {}",
            params.input_width(),
            x.len()
        )));
    }
    if prev_h.len() != hidden {
        return Err(Error::shape(format!(
            "gru state width {} does not match hidden width {}",
            prev_h.len(),
            hidden
        )));
    }
    let a = concat(prev_h, x);
    let reset = (params.w_reset.dot(&a) + &params.b_reset).mapv(sigmoid);
    let update = (params.w_update.dot(&a) + &params.b_update).mapv(sigmoid);
    let gated_h = &reset * &prev_h;
    let ar = concat(gated_h.view(), x);
    let cand = (params.w_cand.dot(&ar) + &params.b_cand).mapv(f64::tanh);
    let h = (1.0 - &update) * &prev_h + &update * &cand;
    Ok(GruStepCache {
        concat: a,
        concat_reset: ar,
        h_prev: prev_h.to_owned(),
        reset,
        update,
        cand,
        h,
    })
}

/// One GRU step: maps the previous hidden vector to the next one.
pub fn gru_step(params: &GruCellParams, x: ArrayView1<'_, f64>, prev_hidden: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    Ok(gru_step_cached(params, x, prev_hidden)?.h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::CellKind;
    use crate::rng::seed_stream;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::Rng;

    fn random_lstm(hidden: usize, input: usize, seed: u64) -> LstmCellParams {
        let mut rng = seed_stream(seed, 7);
        let mut p = LstmCellParams::zeros(hidden, input);
        for w in [&mut p.w_forget, &mut p.w_input, &mut p.w_cand, &mut p.w_output] {
            w.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        }
        for b in [&mut p.b_forget, &mut p.b_input, &mut p.b_cand, &mut p.b_output] {
            b.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        }
        p
    }

    fn random_gru(hidden: usize, input: usize, seed: u64) -> GruCellParams {
        let mut rng = seed_stream(seed, 8);
        let mut p = GruCellParams::zeros(hidden, input);
        for w in [&mut p.w_reset, &mut p.w_update, &mut p.w_cand] {
            w.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        }
        for b in [&mut p.b_reset, &mut p.b_update, &mut p.b_cand] {
            b.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        }
        p
    }

    #[test]
    fn zero_lstm_is_a_fixpoint_at_zero_state() {
        let p = LstmCellParams::zeros(4, 3);
        let state = CellState::zeros(CellKind::Lstm, 4);
        let x = Array1::from_vec(vec![0.3, -1.2, 5.0]);
        let next = lstm_step(&p, x.view(), &state).unwrap();
        assert!(next.hidden.iter().all(|&h| h == 0.0));
        assert!(next.memory.unwrap().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn saturated_forget_gate_carries_memory_exactly() {
        // f = sigmoid(100) rounds to exactly 1.0 in f64, i = 0.5, k = tanh(0) = 0,
        // so the memory passes through unchanged.
        let mut p = LstmCellParams::zeros(2, 3);
        p.b_forget.fill(100.0);
        let state = CellState {
            hidden: Array1::zeros(2),
            memory: Some(Array1::from_vec(vec![0.7, -1.3])),
        };
        let x = Array1::from_vec(vec![0.0, 0.0, 0.0]);
        let next = lstm_step(&p, x.view(), &state).unwrap();
        let mem = next.memory.unwrap();
        assert_eq!(mem[0], 0.7);
        assert_eq!(mem[1], -1.3);
    }

    #[test]
    fn zero_gru_halves_previous_hidden() {
        // u = sigmoid(0) = 0.5 and the candidate is tanh(0) = 0
        let p = GruCellParams::zeros(2, 3);
        let prev = Array1::from_vec(vec![1.0, -1.0]);
        let x = Array1::from_vec(vec![0.4, 0.5, 0.6]);
        let h = gru_step(&p, x.view(), prev.view()).unwrap();
        assert_eq!(h[0], 0.5);
        assert_eq!(h[1], -0.5);
    }

    #[test]
    fn suppressed_update_gate_is_identity_carry() {
        let mut p = GruCellParams::zeros(2, 2);
        p.b_update.fill(-100.0);
        let prev = Array1::from_vec(vec![0.25, -0.75]);
        let x = Array1::from_vec(vec![3.0, -4.0]);
        let h = gru_step(&p, x.view(), prev.view()).unwrap();
        assert_abs_diff_eq!(h[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(h[1], -0.75, epsilon = 1e-15);
    }

    #[test]
    fn gate_ranges_hold_on_random_inputs() {
        for seed in 0..20 {
            let p = random_lstm(5, 4, seed);
            let mut rng = seed_stream(seed, 9);
            let x = Array1::from_iter((0..4).map(|_| rng.random_range(-3.0..3.0)));
            let h = Array1::from_iter((0..5).map(|_| rng.random_range(-1.0..1.0)));
            let c = Array1::from_iter((0..5).map(|_| rng.random_range(-2.0..2.0)));
            let cache = lstm_step_cached(&p, x.view(), h.view(), c.view()).unwrap();
            for g in cache.forget.iter().chain(cache.input.iter()).chain(cache.output.iter()) {
                assert!(*g > 0.0 && *g < 1.0, "gate left (0,1): {g}");
            }
            for k in cache.cand.iter().chain(cache.tanh_c.iter()) {
                assert!(*k > -1.0 && *k < 1.0, "tanh left (-1,1): {k}");
            }

            let gp = random_gru(5, 4, seed);
            let gc = gru_step_cached(&gp, x.view(), h.view()).unwrap();
            for g in gc.reset.iter().chain(gc.update.iter()) {
                assert!(*g > 0.0 && *g < 1.0);
            }
            for k in gc.cand.iter() {
                assert!(*k > -1.0 && *k < 1.0);
            }
        }
    }

    #[test]
    fn dimension_mismatches_are_shape_errors() {
        let p = random_lstm(3, 4, 0);
        let state = CellState::zeros(CellKind::Lstm, 3);
        let x = Array1::zeros(5);
        assert!(matches!(lstm_step(&p, x.view(), &state), Err(Error::Shape(_))));

        let gp = random_gru(3, 4, 0);
        let prev = Array1::zeros(2);
        let x = Array1::zeros(4);
        assert!(matches!(gru_step(&gp, x.view(), prev.view()), Err(Error::Shape(_))));
    }

    // Straight-line re-implementations of the cell equations, written with
    // scalar loops and no shared helpers, used as an independent oracle.
    fn lstm_oracle(p: &LstmCellParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hid = h_prev.len();
        let mut a = Vec::with_capacity(hid + x.len());
        a.extend_from_slice(h_prev);
        a.extend_from_slice(x);
        let gate = |w: &Array2<f64>, b: &Array1<f64>, row: usize| -> f64 {
            let mut z = b[row];
            for (j, aj) in a.iter().enumerate() {
                z += w[[row, j]] * aj;
            }
            z
        };
        let mut h = vec![0.0; hid];
        let mut c = vec![0.0; hid];
        for r in 0..hid {
            let f = 1.0 / (1.0 + (-gate(&p.w_forget, &p.b_forget, r)).exp());
            let i = 1.0 / (1.0 + (-gate(&p.w_input, &p.b_input, r)).exp());
            let k = gate(&p.w_cand, &p.b_cand, r).tanh();
            let o = 1.0 / (1.0 + (-gate(&p.w_output, &p.b_output, r)).exp());
            c[r] = f * c_prev[r] + i * k;
            h[r] = o * c[r].tanh();
        }
        (h, c)
    }

    fn gru_oracle(p: &GruCellParams, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
        let hid = h_prev.len();
        let mut a = Vec::with_capacity(hid + x.len());
        a.extend_from_slice(h_prev);
        a.extend_from_slice(x);
        let gate = |w: &Array2<f64>, b: &Array1<f64>, row: usize, inp: &[f64]| -> f64 {
            let mut z = b[row];
            for (j, v) in inp.iter().enumerate() {
                z += w[[row, j]] * v;
            }
            z
        };
        let mut r_gate = vec![0.0; hid];
        let mut u_gate = vec![0.0; hid];
        for r in 0..hid {
            r_gate[r] = 1.0 / (1.0 + (-gate(&p.w_reset, &p.b_reset, r, &a)).exp());
            u_gate[r] = 1.0 / (1.0 + (-gate(&p.w_update, &p.b_update, r, &a)).exp());
        }
        let mut ar = Vec::with_capacity(hid + x.len());
        for r in 0..hid {
            ar.push(r_gate[r] * h_prev[r]);
        }
        ar.extend_from_slice(x);
        let mut h = vec![0.0; hid];
        for r in 0..hid {
            let cand = gate(&p.w_cand, &p.b_cand, r, &ar).tanh();
            h[r] = (1.0 - u_gate[r]) * h_prev[r] + u_gate[r] * cand;
        }
        h
    }

    #[test]
    fn steps_match_straight_line_oracles() {
        for seed in 0..50 {
            let mut rng = seed_stream(seed, 10);
            let hid = rng.random_range(1..7usize);
            let inp = rng.random_range(1..9usize);
            let x: Vec<f64> = (0..inp).map(|_| rng.random_range(-2.0..2.0)).collect();
            let h: Vec<f64> = (0..hid).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..hid).map(|_| rng.random_range(-2.0..2.0)).collect();

            let p = random_lstm(hid, inp, seed + 1000);
            let state = CellState {
                hidden: Array1::from_vec(h.clone()),
                memory: Some(Array1::from_vec(c.clone())),
            };
            let got = lstm_step(&p, ArrayView1::from(&x), &state).unwrap();
            let (eh, ec) = lstm_oracle(&p, &x, &h, &c);
            for r in 0..hid {
                assert_abs_diff_eq!(got.hidden[r], eh[r], epsilon = 1e-12);
                assert_abs_diff_eq!(got.memory.as_ref().unwrap()[r], ec[r], epsilon = 1e-12);
            }

            let gp = random_gru(hid, inp, seed + 2000);
            let got = gru_step(&gp, ArrayView1::from(&x), ArrayView1::from(&h)).unwrap();
            let expect = gru_oracle(&gp, &x, &h);
            for r in 0..hid {
                assert_abs_diff_eq!(got[r], expect[r], epsilon = 1e-12);
            }
        }
    }
}
