//! Exact inference for a linear-chain CRF, all in log space.
//!
//! A path `y` over `L` lines scores
//! `start[y0] + sum_l E[l, y_l] + sum_l T[y_l, y_{l+1}] + end[y_{L-1}]`.

use ndarray::{Array1, Array2, Array3};
use crate::math::log_sum_exp;

/// `scores[[i, j]]` is the score of label `j` directly following label `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub scores: Array2<f64>,
    pub start: Array1<f64>,
    pub end: Array1<f64>,
}

impl TransitionMatrix {
    pub fn zeros(n_labels: usize) -> Self {
        Self {
            scores: Array2::zeros((n_labels, n_labels)),
            start: Array1::zeros(n_labels),
            end: Array1::zeros(n_labels),
        }
    }

    pub fn n_labels(&self) -> usize {
        self.start.len()
    }

    pub fn is_consistent(&self) -> bool {
        let n = self.start.len();
        self.end.len() == n && self.scores.dim() == (n, n)
    }

    pub fn is_finite(&self) -> bool {
        self.scores.iter().chain(&self.start).chain(&self.end).all(|v| v.is_finite())
    }
}

pub fn path_score(emissions: &Array2<f64>, transitions: &TransitionMatrix, path: &[usize]) -> f64 {
    let Some((&first, _)) = path.split_first() else {
        return 0.0;
    };
    let mut score = transitions.start[first] + transitions.end[path[path.len() - 1]];
    for (l, &y) in path.iter().enumerate() {
        score += emissions[[l, y]];
    }
    for pair in path.windows(2) {
        score += transitions.scores[[pair[0], pair[1]]];
    }
    score
}

fn forward(emissions: &Array2<f64>, t: &TransitionMatrix) -> Array2<f64> {
    let (n_lines, n_labels) = emissions.dim();
    let mut alpha = Array2::zeros((n_lines, n_labels));
    if n_lines == 0 {
        return alpha;
    }
    for j in 0..n_labels {
        alpha[[0, j]] = t.start[j] + emissions[[0, j]];
    }
    let mut buf = vec![0.0; n_labels];
    for l in 1..n_lines {
        for j in 0..n_labels {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = alpha[[l - 1, i]] + t.scores[[i, j]];
            }
            alpha[[l, j]] = emissions[[l, j]] + log_sum_exp(&buf);
        }
    }
    alpha
}

fn backward(emissions: &Array2<f64>, t: &TransitionMatrix) -> Array2<f64> {
    let (n_lines, n_labels) = emissions.dim();
    let mut beta = Array2::zeros((n_lines, n_labels));
    if n_lines == 0 {
        return beta;
    }
    for i in 0..n_labels {
        beta[[n_lines - 1, i]] = t.end[i];
    }
    let mut buf = vec![0.0; n_labels];
    for l in (0..n_lines - 1).rev() {
        for i in 0..n_labels {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = t.scores[[i, j]] + emissions[[l + 1, j]] + beta[[l + 1, j]];
            }
            beta[[l, i]] = log_sum_exp(&buf);
        }
    }
    beta
}

/// `log Z`, the log-sum-exp of all path scores. Zero for an empty note.
pub fn log_partition(emissions: &Array2<f64>, transitions: &TransitionMatrix) -> f64 {
    let n_lines = emissions.nrows();
    if n_lines == 0 {
        return 0.0;
    }
    let alpha = forward(emissions, transitions);
    let last: Vec<f64> = (0..emissions.ncols())
        .map(|j| alpha[[n_lines - 1, j]] + transitions.end[j])
        .collect();
    log_sum_exp(&last)
}

/// Highest-scoring path and its score. At every backtracking decision the
/// lowest label index wins a tie.
pub fn viterbi_decode(emissions: &Array2<f64>, transitions: &TransitionMatrix) -> (Vec<usize>, f64) {
    let (n_lines, n_labels) = emissions.dim();
    if n_lines == 0 {
        return (Vec::new(), 0.0);
    }
    let mut delta = Array2::<f64>::zeros((n_lines, n_labels));
    let mut back = Array2::<usize>::zeros((n_lines, n_labels));
    for j in 0..n_labels {
        delta[[0, j]] = transitions.start[j] + emissions[[0, j]];
    }
    for l in 1..n_lines {
        for j in 0..n_labels {
            let mut best_i = 0;
            let mut best = delta[[l - 1, 0]] + transitions.scores[[0, j]];
            for i in 1..n_labels {
                let s = delta[[l - 1, i]] + transitions.scores[[i, j]];
                if s > best {
                    best = s;
                    best_i = i;
                }
            }
            delta[[l, j]] = best + emissions[[l, j]];
            back[[l, j]] = best_i;
        }
    }
    let mut last = 0;
    let mut best = delta[[n_lines - 1, 0]] + transitions.end[0];
    for j in 1..n_labels {
        let s = delta[[n_lines - 1, j]] + transitions.end[j];
        if s > best {
            best = s;
            last = j;
        }
    }
    let mut path = vec![0; n_lines];
    path[n_lines - 1] = last;
    for l in (1..n_lines).rev() {
        path[l - 1] = back[[l, path[l]]];
    }
    let score = path_score(emissions, transitions, &path);
    (path, score)
}

/// Posterior marginals from forward-backward.
#[derive(Debug, Clone)]
pub struct Marginals {
    pub log_z: f64,
    /// `unary[[l, j]] = P(y_l = j)`.
    pub unary: Array2<f64>,
    /// `pairwise[[l, i, j]] = P(y_l = i, y_{l+1} = j)`.
    pub pairwise: Array3<f64>,
}

pub fn marginals(emissions: &Array2<f64>, transitions: &TransitionMatrix) -> Marginals {
    let (n_lines, n_labels) = emissions.dim();
    let alpha = forward(emissions, transitions);
    let beta = backward(emissions, transitions);
    let log_z = log_partition(emissions, transitions);
    let unary = Array2::from_shape_fn((n_lines, n_labels), |(l, j)| {
        (alpha[[l, j]] + beta[[l, j]] - log_z).exp()
    });
    let pairwise = Array3::from_shape_fn((n_lines.saturating_sub(1), n_labels, n_labels), |(l, i, j)| {
        (alpha[[l, i]] + transitions.scores[[i, j]] + emissions[[l + 1, j]] + beta[[l + 1, j]] - log_z).exp()
    });
    Marginals {
        log_z,
        unary,
        pairwise,
    }
}

/// Gradient of the negative log-likelihood with respect to the emission
/// matrix and the transition parameters.
#[derive(Debug, Clone)]
pub struct ChainGradient {
    pub emissions: Array2<f64>,
    pub transitions: TransitionMatrix,
}

/// `log Z - score(gold)` and its gradient (expected minus observed counts).
pub fn chain_nll_and_gradient(
    emissions: &Array2<f64>,
    transitions: &TransitionMatrix,
    gold: &[usize],
) -> (f64, ChainGradient) {
    let (n_lines, n_labels) = emissions.dim();
    let m = marginals(emissions, transitions);
    let loss = m.log_z - path_score(emissions, transitions, gold);

    let mut d_emissions = m.unary.clone();
    for (l, &y) in gold.iter().enumerate() {
        d_emissions[[l, y]] -= 1.0;
    }
    let mut d_trans = TransitionMatrix::zeros(n_labels);
    if n_lines > 0 {
        for j in 0..n_labels {
            d_trans.start[j] = m.unary[[0, j]];
            d_trans.end[j] = m.unary[[n_lines - 1, j]];
        }
        d_trans.start[gold[0]] -= 1.0;
        d_trans.end[gold[n_lines - 1]] -= 1.0;
        d_trans.scores = m.pairwise.sum_axis(ndarray::Axis(0));
        for pair in gold.windows(2) {
            d_trans.scores[[pair[0], pair[1]]] -= 1.0;
        }
    }
    (
        loss,
        ChainGradient {
            emissions: d_emissions,
            transitions: d_trans,
        },
    )
}
