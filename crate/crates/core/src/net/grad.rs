//! Exact loss gradients via backpropagation through time.
//!
//! The forward pass caches every gate activation per step; the backward pass
//! walks the steps in reverse, splitting each step's hidden-state gradient
//! into the dense-head contribution (at emitting steps) and the carry from
//! the following step. All derivatives are hand-derived for exactly these two
//! cells — there is no autodiff machinery here.

use ndarray::{Array1, Array2};

use super::cell::{gru_step_cached, lstm_step_cached, GruStepCache, LstmStepCache};
use super::loss::abs_subgradient;
use super::{Mode, NetworkParams, RecurrentParams};
use crate::error::{Error, Result};

/// One normalized training record: `n_steps` feature vectors and the target
/// list the configuration expects (1 value for many-to-one, `n_steps` for
/// many-to-many).
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainingExample {
    pub steps: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

enum StepCache {
    Lstm(LstmStepCache),
    Gru(GruStepCache),
}

impl StepCache {
    fn hidden(&self) -> &Array1<f64> {
        match self {
            StepCache::Lstm(c) => &c.h,
            StepCache::Gru(c) => &c.h,
        }
    }
}

struct EmitCache {
    hidden_pre: Array1<f64>,
    hidden_act: Array1<f64>,
    out_pre: f64,
    out: f64,
}

/// `acc += dz ⊗ a` (rank-1 update).
fn add_outer(acc: &mut Array2<f64>, dz: &Array1<f64>, a: &Array1<f64>) {
    for (r, dzr) in dz.iter().enumerate() {
        if *dzr == 0.0 {
            continue;
        }
        let mut row = acc.row_mut(r);
        for (c, ac) in a.iter().enumerate() {
            row[c] += dzr * ac;
        }
    }
}

/// `Wᵀ · dz`
fn t_dot(w: &Array2<f64>, dz: &Array1<f64>) -> Array1<f64> {
    w.t().dot(dz)
}

fn head(v: &Array1<f64>, n: usize) -> Array1<f64> {
    v.slice(ndarray::s![..n]).to_owned()
}

/// Mean gradient of the configuration's loss over `batch`, together with the
/// batch loss itself. The gradient comes back as a same-shaped
/// `NetworkParams` whose entries are `∂loss/∂parameter`.
pub fn compute_gradients<'a, I>(net: &NetworkParams, batch: I) -> Result<(NetworkParams, f64)>
where
    I: IntoIterator<Item = &'a TrainingExample>,
{
    let batch: Vec<&TrainingExample> = batch.into_iter().collect();
    if batch.is_empty() {
        return Err(Error::domain("gradient computation needs a nonempty batch"));
    }
    let s = net.n_steps;
    let hidden = net.hidden_width();
    let n = batch.len() as f64;
    // every emitted output carries this loss weight, so summing per-sample
    // contributions yields the batch-mean gradient directly
    let weight = match net.mode {
        Mode::ManyToOne => 1.0 / n,
        Mode::ManyToMany => 1.0 / (s as f64 * n),
    };

    let mut grads = net.zeros_like();
    let mut loss = 0.0;

    for (j, ex) in batch.iter().enumerate() {
        if ex.steps.len() != s {
            return Err(Error::shape(format!(
                "example {} has {} steps, expected {}",
                j,
                ex.steps.len(),
                s
            )));
        }
        if ex.targets.len() != net.mode.output_count(s) {
            return Err(Error::shape(format!(
                "example {} has {} targets, expected {}",
                j,
                ex.targets.len(),
                net.mode.output_count(s)
            )));
        }

        // ---- forward, caching everything -------------------------------
        let mut caches: Vec<StepCache> = Vec::with_capacity(s);
        let mut emits: Vec<Option<EmitCache>> = Vec::with_capacity(s);
        let mut h = Array1::zeros(hidden);
        let mut c = Array1::zeros(hidden);
        for (t, step) in ex.steps.iter().enumerate() {
            if step.len() != net.input_width {
                return Err(Error::shape(format!(
                    "example {} step {} has {} features, expected {}",
                    j,
                    t,
                    step.len(),
                    net.input_width
                )));
            }
            let x = ndarray::ArrayView1::from(step.as_slice());
            let cache = match &net.recurrent {
                RecurrentParams::Lstm(p) => {
                    let cc = lstm_step_cached(p, x, h.view(), c.view())?;
                    h = cc.h.clone();
                    c = cc.c.clone();
                    StepCache::Lstm(cc)
                }
                RecurrentParams::Gru(p) => {
                    let cc = gru_step_cached(p, x, h.view())?;
                    h = cc.h.clone();
                    StepCache::Gru(cc)
                }
            };
            let emit = match net.mode {
                Mode::ManyToMany => true,
                Mode::ManyToOne => t + 1 == s,
            };
            if emit {
                let (hidden_pre, hidden_act) = net.dense_hidden.forward_cached(h.view())?;
                let (out_pre, out_act) = net.dense_out.forward_cached(hidden_act.view())?;
                let target = match net.mode {
                    Mode::ManyToOne => ex.targets[0],
                    Mode::ManyToMany => ex.targets[t],
                };
                loss += weight * (out_act[0] - target).abs();
                emits.push(Some(EmitCache {
                    hidden_pre,
                    hidden_act,
                    out_pre: out_pre[0],
                    out: out_act[0],
                }));
            } else {
                emits.push(None);
            }
            caches.push(cache);
        }

        // ---- backward through time -------------------------------------
        let mut dh_next: Array1<f64> = Array1::zeros(hidden);
        let mut dc_next: Array1<f64> = Array1::zeros(hidden);
        for t in (0..s).rev() {
            let mut dh = dh_next;
            if let Some(e) = &emits[t] {
                let target = match net.mode {
                    Mode::ManyToOne => ex.targets[0],
                    Mode::ManyToMany => ex.targets[t],
                };
                let dy = weight * abs_subgradient(e.out - target);
                if dy != 0.0 {
                    let dv = dy * net.dense_out.activation.derivative(e.out_pre);
                    grads.dense_out.weight.row_mut(0).scaled_add(dv, &e.hidden_act);
                    grads.dense_out.bias[0] += dv;
                    let dg = net.dense_out.weight.row(0).to_owned() * dv;
                    let act = net.dense_hidden.activation;
                    let du = &dg * &e.hidden_pre.mapv(|z| act.derivative(z));
                    add_outer(&mut grads.dense_hidden.weight, &du, caches[t].hidden());
                    grads.dense_hidden.bias += &du;
                    dh += &t_dot(&net.dense_hidden.weight, &du);
                }
            }

            match (&net.recurrent, &mut grads.recurrent, &caches[t]) {
                (RecurrentParams::Lstm(p), RecurrentParams::Lstm(g), StepCache::Lstm(cc)) => {
                    // dC_t collects the next step's carry and this step's
                    // dH_t ⊙ o ⊙ tanh'(C_t)
                    let dc_total = &dc_next + &(&dh * &cc.output * &cc.tanh_c.mapv(|v| 1.0 - v * v));
                    let d_out = &dh * &cc.tanh_c;
                    let dz_out = &d_out * &cc.output.mapv(|v| v * (1.0 - v));
                    let d_forget = &dc_total * &cc.c_prev;
                    let dz_forget = &d_forget * &cc.forget.mapv(|v| v * (1.0 - v));
                    let d_input = &dc_total * &cc.cand;
                    let dz_input = &d_input * &cc.input.mapv(|v| v * (1.0 - v));
                    let d_cand = &dc_total * &cc.input;
                    let dz_cand = &d_cand * &cc.cand.mapv(|v| 1.0 - v * v);

                    add_outer(&mut g.w_forget, &dz_forget, &cc.concat);
                    add_outer(&mut g.w_input, &dz_input, &cc.concat);
                    add_outer(&mut g.w_cand, &dz_cand, &cc.concat);
                    add_outer(&mut g.w_output, &dz_out, &cc.concat);
                    g.b_forget += &dz_forget;
                    g.b_input += &dz_input;
                    g.b_cand += &dz_cand;
                    g.b_output += &dz_out;

                    let mut da = t_dot(&p.w_forget, &dz_forget);
                    da += &t_dot(&p.w_input, &dz_input);
                    da += &t_dot(&p.w_cand, &dz_cand);
                    da += &t_dot(&p.w_output, &dz_out);
                    dh_next = head(&da, hidden);
                    dc_next = &dc_total * &cc.forget;
                }
                (RecurrentParams::Gru(p), RecurrentParams::Gru(g), StepCache::Gru(cc)) => {
                    let d_cand = &dh * &cc.update;
                    let d_update = &dh * &(&cc.cand - &cc.h_prev);
                    let mut dh_prev = &dh * &cc.update.mapv(|u| 1.0 - u);

                    let dz_cand = &d_cand * &cc.cand.mapv(|v| 1.0 - v * v);
                    add_outer(&mut g.w_cand, &dz_cand, &cc.concat_reset);
                    g.b_cand += &dz_cand;

                    // the candidate path reads [r ⊙ H_{t-1}, X_t]: its
                    // hidden-side gradient splits between r and H_{t-1}
                    let dar_h = head(&t_dot(&p.w_cand, &dz_cand), hidden);
                    let d_reset = &dar_h * &cc.h_prev;
                    dh_prev += &(&dar_h * &cc.reset);

                    let dz_update = &d_update * &cc.update.mapv(|v| v * (1.0 - v));
                    let dz_reset = &d_reset * &cc.reset.mapv(|v| v * (1.0 - v));
                    add_outer(&mut g.w_update, &dz_update, &cc.concat);
                    add_outer(&mut g.w_reset, &dz_reset, &cc.concat);
                    g.b_update += &dz_update;
                    g.b_reset += &dz_reset;

                    let mut da = t_dot(&p.w_update, &dz_update);
                    da += &t_dot(&p.w_reset, &dz_reset);
                    dh_prev += &head(&da, hidden);

                    dh_next = dh_prev;
                    dc_next = Array1::zeros(hidden);
                }
                _ => unreachable!("gradient container always mirrors the network variant"),
            }
        }
    }

    if !loss.is_finite() {
        return Err(Error::numeric("outputs", "batch loss is not finite"));
    }
    if let Some(block) = grads.find_non_finite() {
        return Err(Error::numeric(block, "gradient overflowed"));
    }
    Ok((grads, loss))
}
