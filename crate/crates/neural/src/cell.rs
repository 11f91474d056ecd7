//! Gated recurrent path encoder. Gate blocks are stacked in the order
//! input, forget, candidate, output; every weight matrix has `4d` rows.

use crate::error::{NeuralError, Result};

/// Borrowed view of the shared cell parameters.
#[derive(Debug, Clone, Copy)]
pub struct CellParams<'a> {
    pub hidden: usize,
    /// `4d × d`, applied to the node state.
    pub w_input: &'a [f64],
    /// `4d × d`, applied to the previous hidden state.
    pub w_hidden: &'a [f64],
    pub bias: &'a [f64],
    /// `4d × d` and the `(K+1) × d` distance table.
    pub distance: Option<(&'a [f64], &'a [f64])>,
    /// `4d × d`, applied to the encoded edge feature.
    pub w_edge: Option<&'a [f64]>,
}

#[derive(Debug, Clone)]
pub struct StepCache {
    /// Activated gates, `4d`.
    pub gates: Vec<f64>,
    pub cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Turns `4d` pre-activations into gates in place and advances the state.
pub(crate) fn lstm_pointwise(pre: &mut [f64], c_prev: Option<&[f64]>, cell: &mut [f64], hidden: &mut [f64]) {
    let d = cell.len();
    for j in 0..d {
        let i = sigmoid(pre[j]);
        let f = sigmoid(pre[d + j]);
        let g = pre[2 * d + j].tanh();
        let o = sigmoid(pre[3 * d + j]);
        pre[j] = i;
        pre[d + j] = f;
        pre[2 * d + j] = g;
        pre[3 * d + j] = o;
        let c = f * c_prev.map_or(0.0, |p| p[j]) + i * g;
        cell[j] = c;
        hidden[j] = o * c.tanh();
    }
}

/// Reverse of [`lstm_pointwise`]. `d_cell` holds the gradient arriving from
/// later steps and is overwritten with the gradient for the previous cell
/// state.
pub(crate) fn lstm_pointwise_backward(
    gates: &[f64],
    c_prev: Option<&[f64]>,
    cell: &[f64],
    d_hidden: &[f64],
    d_cell: &mut [f64],
    d_pre: &mut [f64],
) {
    let d = cell.len();
    for j in 0..d {
        let (i, f, g, o) = (gates[j], gates[d + j], gates[2 * d + j], gates[3 * d + j]);
        let tc = cell[j].tanh();
        let dc = d_cell[j] + d_hidden[j] * o * (1.0 - tc * tc);
        let cp = c_prev.map_or(0.0, |p| p[j]);
        d_pre[j] = dc * g * i * (1.0 - i);
        d_pre[d + j] = dc * cp * f * (1.0 - f);
        d_pre[2 * d + j] = dc * i * (1.0 - g * g);
        d_pre[3 * d + j] = d_hidden[j] * tc * o * (1.0 - o);
        d_cell[j] = dc * f;
    }
}

fn add_matvec(out: &mut [f64], w: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o += w[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Runs the cell over `seq` and returns the final hidden state with the
/// per-step activations. `dists[t]` selects a row of the distance table;
/// `edges[t]` is the encoded edge entering step `t`, and the first step
/// always sees a zero edge vector.
pub fn seq_encode_forward(
    params: &CellParams<'_>,
    seq: &[&[f64]],
    dists: Option<&[usize]>,
    edges: Option<&[&[f64]]>,
) -> Result<(Vec<f64>, Vec<StepCache>)> {
    let d = params.hidden;
    if seq.is_empty() {
        return Err(NeuralError::ShapeMismatch("empty sequence".into()));
    }
    if seq.iter().any(|x| x.len() != d) {
        return Err(NeuralError::ShapeMismatch(format!("sequence rows must have length {d}")));
    }
    if dists.is_some_and(|ds| ds.len() != seq.len()) || edges.is_some_and(|es| es.len() != seq.len()) {
        return Err(NeuralError::ShapeMismatch("annotation length differs from sequence length".into()));
    }
    if dists.is_some() != params.distance.is_some() || edges.is_some() != params.w_edge.is_some() {
        return Err(NeuralError::ShapeMismatch("annotations do not match the cell variant".into()));
    }
    let mut steps: Vec<StepCache> = Vec::with_capacity(seq.len());
    for (t, x) in seq.iter().enumerate() {
        let mut pre = params.bias.to_vec();
        add_matvec(&mut pre, params.w_input, x);
        if let Some(prev) = steps.last() {
            add_matvec(&mut pre, params.w_hidden, &prev.hidden);
        }
        if let (Some((w_d, table)), Some(ds)) = (params.distance, dists) {
            let row = table
                .get(ds[t] * d..(ds[t] + 1) * d)
                .ok_or_else(|| NeuralError::ShapeMismatch(format!("distance {} outside table", ds[t])))?;
            add_matvec(&mut pre, w_d, row);
        }
        if let (Some(w_e), Some(es)) = (params.w_edge, edges) {
            if t > 0 {
                if es[t].len() != d {
                    return Err(NeuralError::ShapeMismatch("edge rows must have the hidden width".into()));
                }
                add_matvec(&mut pre, w_e, es[t]);
            }
        }
        let mut cell = vec![0.0; d];
        let mut hidden = vec![0.0; d];
        lstm_pointwise(&mut pre, steps.last().map(|s| s.cell.as_slice()), &mut cell, &mut hidden);
        if hidden.iter().any(|h| !h.is_finite()) {
            return Err(NeuralError::NonFinite("recurrent state".into()));
        }
        steps.push(StepCache { gates: pre, cell, hidden });
    }
    Ok((steps.last().expect("nonempty").hidden.clone(), steps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters_give_zero_output() {
        let d = 3;
        let z = vec![0.0; 4 * d * d];
        let b = vec![0.0; 4 * d];
        let p = CellParams { hidden: d, w_input: &z, w_hidden: &z, bias: &b, distance: None, w_edge: None };
        let x = [1.0, -2.0, 3.0];
        let (h, cache) = seq_encode_forward(&p, &[&x, &x], None, None).unwrap();
        assert_eq!(h, vec![0.0; d]);
        assert!(cache[0].gates[..d].iter().all(|&g| g == 0.5));
    }

    #[test]
    fn scalar_two_step_hand_computation() {
        // weights per gate (i, f, g, o): input, hidden, bias
        let wx = [0.5, -0.3, 0.8, 0.2];
        let wh = [0.1, 0.4, -0.6, 0.7];
        let b = [0.0, 1.0, 0.1, -0.2];
        let p = CellParams { hidden: 1, w_input: &wx, w_hidden: &wh, bias: &b, distance: None, w_edge: None };
        let (h, _) = seq_encode_forward(&p, &[&[1.0], &[-2.0]], None, None).unwrap();

        // Step 1, x = 1, h0 = c0 = 0:
        //   i = s(0.5), f = s(0.7), g = tanh(0.9), o = s(0.0) = 0.5
        //   c1 = i g, h1 = 0.5 tanh(c1)
        // Step 2, x = -2:
        //   i = s(-1 + 0.1 h1), f = s(0.6 + 0.4 h1 + 1), g = tanh(-1.6 - 0.6 h1 + 0.1),
        //   o = s(-0.4 + 0.7 h1 - 0.2), c2 = f c1 + i g, h2 = o tanh(c2)
        // Evaluated with mpmath at 30 digits.
        let expected = 0.047_675_058_008_660_05;
        assert!((h[0] - expected).abs() < 1e-12, "{}", h[0]);
    }

    #[test]
    fn zero_distance_table_matches_plain_cell() {
        let d = 2;
        let wx: Vec<f64> = (0..4 * d * d).map(|i| (i as f64 * 0.37).sin()).collect();
        let wh: Vec<f64> = (0..4 * d * d).map(|i| (i as f64 * 0.11).cos() * 0.5).collect();
        let wd: Vec<f64> = (0..4 * d * d).map(|i| i as f64 - 3.0).collect();
        let b = vec![0.1; 4 * d];
        let table = vec![0.0; 4 * d];
        let plain = CellParams { hidden: d, w_input: &wx, w_hidden: &wh, bias: &b, distance: None, w_edge: None };
        let aware = CellParams { distance: Some((&wd, &table)), ..plain };
        let seq: [&[f64]; 3] = [&[0.3, -0.1], &[1.0, 2.0], &[-0.5, 0.25]];
        let (a, _) = seq_encode_forward(&plain, &seq, None, None).unwrap();
        let (b2, _) = seq_encode_forward(&aware, &seq, Some(&[3, 1, 0]), None).unwrap();
        assert_eq!(a, b2);
    }

    #[test]
    fn shape_errors() {
        let d = 1;
        let w = [0.0; 4];
        let p = CellParams { hidden: d, w_input: &w, w_hidden: &w, bias: &w, distance: None, w_edge: None };
        assert!(seq_encode_forward(&p, &[], None, None).is_err());
        assert!(seq_encode_forward(&p, &[&[1.0, 2.0]], None, None).is_err());
        assert!(seq_encode_forward(&p, &[&[1.0]], Some(&[0]), None).is_err());
    }
}
