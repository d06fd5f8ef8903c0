#![allow(dead_code)]

use perq_core::mdp::TabularMdp;
use perq_core::seeded_rng;
use rand::Rng;

/// Random MDP with sparse rows (up to three successors per pair). When
/// `with_terminal` is set the last state is absorbing with zero reward.
pub fn random_mdp(seed: u64, n_states: usize, n_actions: usize, gamma: f64, with_terminal: bool) -> TabularMdp {
    let mut rng = seeded_rng(seed);
    let mut p = vec![0.0; n_states * n_actions * n_states];
    let mut r = vec![0.0; n_states * n_actions];
    let terminal: Vec<bool> = (0..n_states).map(|s| with_terminal && n_states > 1 && s == n_states - 1).collect();
    for s in 0..n_states {
        for a in 0..n_actions {
            let row = &mut p[(s * n_actions + a) * n_states..][..n_states];
            if terminal[s] {
                row[s] = 1.0;
                continue;
            }
            let width = rng.random_range(1..=3.min(n_states));
            let mut weights = Vec::with_capacity(width);
            for _ in 0..width {
                weights.push((rng.random_range(0..n_states), rng.random_range(0.1..1.0)));
            }
            let total: f64 = weights.iter().map(|w| w.1).sum();
            for (next, w) in weights {
                row[next] += w / total;
            }
            r[s * n_actions + a] = rng.random_range(-1.0..1.0);
        }
    }
    TabularMdp::new(n_states, n_actions, p, r, terminal, gamma).unwrap()
}

/// Dense `P_a` as nested vectors.
pub fn action_matrix(mdp: &TabularMdp, a: usize) -> Vec<Vec<f64>> {
    (0..mdp.n_states()).map(|s| mdp.transition_row(s, a).to_vec()).collect()
}

pub fn matmul(x: &[Vec<f64>], y: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = x.len();
    let m = y[0].len();
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for l in 0..y.len() {
            for j in 0..m {
                out[i][j] += x[i][l] * y[l][j];
            }
        }
    }
    out
}

pub fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// `P_k` and `r_k` for action `a` straight from the definition
/// `r_k = Σ_{i<k} γ^i P_a^i r_a`.
pub fn persistent_dense(mdp: &TabularMdp, a: usize, k: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = mdp.n_states();
    let pa = action_matrix(mdp, a);
    let ra: Vec<f64> = (0..n).map(|s| mdp.reward(s, a)).collect();
    let mut power = identity(n);
    let mut reward = vec![0.0; n];
    for i in 0..k {
        let g = mdp.gamma().powi(i as i32);
        for s in 0..n {
            reward[s] += g * (0..n).map(|x| power[s][x] * ra[x]).sum::<f64>();
        }
        power = matmul(&power, &pa);
    }
    (power, reward)
}

/// Primitive `Q*` by plain value iteration, `q[s][a]`.
pub fn q_star_naive(mdp: &TabularMdp, tol: f64) -> Vec<Vec<f64>> {
    let (n, na, g) = (mdp.n_states(), mdp.n_actions(), mdp.gamma());
    let mut q = vec![vec![0.0; na]; n];
    loop {
        let v: Vec<f64> = q.iter().map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
        let mut delta: f64 = 0.0;
        let mut next = q.clone();
        for s in 0..n {
            for a in 0..na {
                let row = mdp.transition_row(s, a);
                let value = mdp.reward(s, a) + g * (0..n).map(|x| row[x] * v[x]).sum::<f64>();
                delta = delta.max((value - q[s][a]).abs());
                next[s][a] = value;
            }
        }
        q = next;
        if delta < tol {
            return q;
        }
    }
}
