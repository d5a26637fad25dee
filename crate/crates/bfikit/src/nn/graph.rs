//! Tape-based reverse-mode differentiation.

use super::NnError;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tensor(usize);

#[derive(Clone)]
enum Op {
    Leaf,
    Dense {
        x: Tensor,
        w: Tensor,
        b: Tensor,
    },
    Conv1d {
        x: Tensor,
        w: Tensor,
        b: Tensor,
    },
    Relu {
        x: Tensor,
    },
    MulMask {
        x: Tensor,
        mask: Tensor,
    },
    MeanPoolTime {
        x: Tensor,
    },
    StackRows {
        rows: Vec<Tensor>,
    },
    Grl {
        x: Tensor,
        lambda: f64,
    },
    SoftmaxCrossEntropy {
        logits: Tensor,
        labels: Vec<usize>,
        /// Row-softmax cached at forward time.
        probs: Vec<f64>,
    },
    Mmd {
        a: Tensor,
        b: Tensor,
        bandwidths: Vec<f64>,
    },
    SupCon {
        emb: Tensor,
        labels: Vec<usize>,
        temperature: f64,
    },
    Uncertainty {
        losses: Vec<Tensor>,
        log_vars: Tensor,
    },
}

struct Node {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Vec<f64>,
    op: Op,
}

/// A single-use computation tape.
///
/// Nodes only ever reference earlier nodes, so one reverse sweep in
/// [`Graph::backward`] propagates gradients completely. Build a fresh graph
/// per training step and read parameter gradients back out with
/// [`Graph::grad`].
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn ensure_finite(op: &'static str, values: &[f64]) -> Result<(), NnError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NnError::NonFinite(op))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, op: Op) -> Tensor {
        let n = values.len();
        self.nodes.push(Node {
            shape,
            values,
            grad: vec![0.0; n],
            op,
        });
        Tensor(self.nodes.len() - 1)
    }

    /// Introduces an input or parameter copy.
    pub fn leaf(&mut self, shape: &[usize], values: Vec<f64>) -> Result<Tensor, NnError> {
        if shape.iter().product::<usize>() != values.len() {
            return Err(NnError::ShapeMismatch(format!(
                "shape {:?} holds {} values, got {}",
                shape,
                shape.iter().product::<usize>(),
                values.len()
            )));
        }
        ensure_finite("leaf", &values)?;
        Ok(self.push(shape.to_vec(), values, Op::Leaf))
    }

    pub fn shape(&self, t: Tensor) -> &[usize] {
        &self.nodes[t.0].shape
    }

    pub fn value(&self, t: Tensor) -> &[f64] {
        &self.nodes[t.0].values
    }

    pub fn grad(&self, t: Tensor) -> &[f64] {
        &self.nodes[t.0].grad
    }

    /// `y = W x + b` for a vector `x`: `w` is `[out, in]`, `b` is `[out]`.
    pub fn dense(&mut self, x: Tensor, w: Tensor, b: Tensor) -> Result<Tensor, NnError> {
        let xs = &self.nodes[x.0];
        let ws = &self.nodes[w.0];
        let bs = &self.nodes[b.0];
        if xs.shape.len() != 1 || ws.shape.len() != 2 || bs.shape.len() != 1 {
            return Err(NnError::ShapeMismatch(
                "dense wants x [in], w [out, in], b [out]".into(),
            ));
        }
        let (n_out, n_in) = (ws.shape[0], ws.shape[1]);
        if xs.shape[0] != n_in || bs.shape[0] != n_out {
            return Err(NnError::ShapeMismatch(format!(
                "dense x {:?} w {:?} b {:?}",
                xs.shape, ws.shape, bs.shape
            )));
        }
        let mut values = self.nodes[b.0].values.clone();
        for (o, out) in values.iter_mut().enumerate() {
            let row = &self.nodes[w.0].values[o * n_in..(o + 1) * n_in];
            *out += row
                .iter()
                .zip(&self.nodes[x.0].values)
                .map(|(wi, xi)| wi * xi)
                .sum::<f64>();
        }
        ensure_finite("dense", &values)?;
        Ok(self.push(vec![n_out], values, Op::Dense { x, w, b }))
    }

    /// 1-D convolution with centered zero padding and stride 1.
    ///
    /// `x` is `[c_in, t]`, `w` is `[c_out, c_in, k]` with odd `k`, `b` is
    /// `[c_out]`; output keeps the temporal length.
    pub fn conv1d(&mut self, x: Tensor, w: Tensor, b: Tensor) -> Result<Tensor, NnError> {
        let xs = &self.nodes[x.0];
        let ws = &self.nodes[w.0];
        let bs = &self.nodes[b.0];
        if xs.shape.len() != 2 || ws.shape.len() != 3 || bs.shape.len() != 1 {
            return Err(NnError::ShapeMismatch(
                "conv1d wants x [c_in, t], w [c_out, c_in, k], b [c_out]".into(),
            ));
        }
        let (c_in, t_len) = (xs.shape[0], xs.shape[1]);
        let (c_out, wc_in, k) = (ws.shape[0], ws.shape[1], ws.shape[2]);
        if wc_in != c_in || bs.shape[0] != c_out {
            return Err(NnError::ShapeMismatch(format!(
                "conv1d x {:?} w {:?} b {:?}",
                xs.shape, ws.shape, bs.shape
            )));
        }
        if k % 2 == 0 {
            return Err(NnError::EvenKernel(k));
        }
        let pad = (k - 1) / 2;
        let mut values = vec![0.0; c_out * t_len];
        {
            let xv = &self.nodes[x.0].values;
            let wv = &self.nodes[w.0].values;
            let bv = &self.nodes[b.0].values;
            for o in 0..c_out {
                let out_row = &mut values[o * t_len..(o + 1) * t_len];
                out_row.fill(bv[o]);
                for c in 0..c_in {
                    let x_row = &xv[c * t_len..(c + 1) * t_len];
                    let w_row = &wv[(o * c_in + c) * k..(o * c_in + c + 1) * k];
                    for (dk, &wv) in w_row.iter().enumerate() {
                        // Output index tau reads input index tau + dk - pad.
                        let shift = dk as isize - pad as isize;
                        let lo = (-shift).max(0) as usize;
                        let hi = (t_len as isize - shift).min(t_len as isize) as usize;
                        for tau in lo..hi {
                            out_row[tau] += wv * x_row[(tau as isize + shift) as usize];
                        }
                    }
                }
            }
        }
        ensure_finite("conv1d", &values)?;
        Ok(self.push(vec![c_out, t_len], values, Op::Conv1d { x, w, b }))
    }

    pub fn relu(&mut self, x: Tensor) -> Tensor {
        let values: Vec<f64> = self.nodes[x.0].values.iter().map(|v| v.max(0.0)).collect();
        let shape = self.nodes[x.0].shape.clone();
        self.push(shape, values, Op::Relu { x })
    }

    /// Elementwise product with a frozen mask; the mask is not
    /// differentiated. This is how dropout enters the tape.
    pub fn mul_mask(&mut self, x: Tensor, mask: Tensor) -> Result<Tensor, NnError> {
        if self.nodes[x.0].shape != self.nodes[mask.0].shape {
            return Err(NnError::ShapeMismatch(format!(
                "mask {:?} over {:?}",
                self.nodes[mask.0].shape, self.nodes[x.0].shape
            )));
        }
        let values: Vec<f64> = self.nodes[x.0]
            .values
            .iter()
            .zip(&self.nodes[mask.0].values)
            .map(|(v, m)| v * m)
            .collect();
        let shape = self.nodes[x.0].shape.clone();
        ensure_finite("mul_mask", &values)?;
        Ok(self.push(shape, values, Op::MulMask { x, mask }))
    }

    /// Collapses `[c, t]` to `[c]` by averaging over time.
    pub fn mean_pool_time(&mut self, x: Tensor) -> Result<Tensor, NnError> {
        let xs = &self.nodes[x.0];
        if xs.shape.len() != 2 {
            return Err(NnError::ShapeMismatch(format!(
                "mean_pool_time wants [c, t], got {:?}",
                xs.shape
            )));
        }
        let (c_len, t_len) = (xs.shape[0], xs.shape[1]);
        let inv = 1.0 / t_len as f64;
        let values: Vec<f64> = (0..c_len)
            .map(|c| xs.values[c * t_len..(c + 1) * t_len].iter().sum::<f64>() * inv)
            .collect();
        Ok(self.push(vec![c_len], values, Op::MeanPoolTime { x }))
    }

    /// Stacks equal-length vectors into a `[n, d]` matrix.
    pub fn stack_rows(&mut self, rows: &[Tensor]) -> Result<Tensor, NnError> {
        let first = rows
            .first()
            .ok_or_else(|| NnError::ShapeMismatch("stack_rows of nothing".into()))?;
        let d = self.nodes[first.0].values.len();
        let mut values = Vec::with_capacity(rows.len() * d);
        for &row in rows {
            let node = &self.nodes[row.0];
            if node.shape.len() != 1 || node.values.len() != d {
                return Err(NnError::ShapeMismatch(format!(
                    "stack_rows over mixed shapes {:?} vs [{d}]",
                    node.shape
                )));
            }
            values.extend_from_slice(&node.values);
        }
        Ok(self.push(
            vec![rows.len(), d],
            values,
            Op::StackRows {
                rows: rows.to_vec(),
            },
        ))
    }

    /// Gradient reversal: identity forward, `-lambda` times the upstream
    /// gradient backward.
    pub fn grl(&mut self, x: Tensor, lambda: f64) -> Result<Tensor, NnError> {
        if !(lambda >= 0.0) {
            return Err(NnError::BadLambda(lambda));
        }
        let values = self.nodes[x.0].values.clone();
        let shape = self.nodes[x.0].shape.clone();
        Ok(self.push(shape, values, Op::Grl { x, lambda }))
    }

    /// Mean cross-entropy of row-softmaxed logits `[n, c]` against integer
    /// labels.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Tensor,
        labels: &[usize],
    ) -> Result<Tensor, NnError> {
        let ls = &self.nodes[logits.0];
        if ls.shape.len() != 2 {
            return Err(NnError::ShapeMismatch(format!(
                "logits must be [n, c], got {:?}",
                ls.shape
            )));
        }
        let (n, c) = (ls.shape[0], ls.shape[1]);
        if labels.len() != n || n == 0 {
            return Err(NnError::ShapeMismatch(format!(
                "{} labels for {n} logit rows",
                labels.len()
            )));
        }
        let mut probs = vec![0.0; n * c];
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            if label >= c {
                return Err(NnError::BadLabel { label, classes: c });
            }
            let row = &ls.values[r * c..(r + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for (j, &l) in row.iter().enumerate() {
                let e = (l - max).exp();
                probs[r * c + j] = e;
                denom += e;
            }
            for p in &mut probs[r * c..(r + 1) * c] {
                *p /= denom;
            }
            total += denom.ln() - (row[label] - max);
        }
        let value = total / n as f64;
        ensure_finite("softmax_cross_entropy", &[value])?;
        Ok(self.push(
            vec![1],
            vec![value],
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Squared maximum-mean-discrepancy between two embedding sets, as the
    /// biased V-statistic under a sum of RBF kernels `exp(-gamma r^2)`.
    ///
    /// Identical sets score exactly zero; any inputs score non-negative.
    pub fn mmd(&mut self, a: Tensor, b: Tensor, bandwidths: &[f64]) -> Result<Tensor, NnError> {
        let (na, nb, d) = {
            let sa = &self.nodes[a.0];
            let sb = &self.nodes[b.0];
            if sa.shape.len() != 2 || sb.shape.len() != 2 || sa.shape[1] != sb.shape[1] {
                return Err(NnError::ShapeMismatch(format!(
                    "mmd over {:?} and {:?}",
                    sa.shape, sb.shape
                )));
            }
            if sa.shape[0] == 0 || sb.shape[0] == 0 {
                return Err(NnError::DegenerateBatch("mmd needs non-empty sets".into()));
            }
            (sa.shape[0], sb.shape[0], sa.shape[1])
        };
        if bandwidths.is_empty() || bandwidths.iter().any(|g| !(*g > 0.0)) {
            return Err(NnError::BadBandwidths(format!("{bandwidths:?}")));
        }
        let av = &self.nodes[a.0].values;
        let bv = &self.nodes[b.0].values;
        let mut value = 0.0;
        for &gamma in bandwidths {
            let saa = kernel_sum(av, na, av, na, d, gamma);
            let sbb = kernel_sum(bv, nb, bv, nb, d, gamma);
            let sab = kernel_sum(av, na, bv, nb, d, gamma);
            value += saa / (na * na) as f64 + sbb / (nb * nb) as f64
                - 2.0 * (sab / (na * nb) as f64);
        }
        ensure_finite("mmd", &[value])?;
        Ok(self.push(
            vec![1],
            vec![value],
            Op::Mmd {
                a,
                b,
                bandwidths: bandwidths.to_vec(),
            },
        ))
    }

    /// Supervised contrastive loss over L2-normalized embedding rows.
    ///
    /// Anchors without a same-label partner are skipped; a batch with no
    /// positive pair at all is degenerate.
    pub fn supcon(
        &mut self,
        emb: Tensor,
        labels: &[usize],
        temperature: f64,
    ) -> Result<Tensor, NnError> {
        let es = &self.nodes[emb.0];
        if es.shape.len() != 2 || es.shape[0] != labels.len() {
            return Err(NnError::ShapeMismatch(format!(
                "embeddings {:?} with {} labels",
                es.shape,
                labels.len()
            )));
        }
        let n = es.shape[0];
        if n < 2 {
            return Err(NnError::DegenerateBatch(
                "contrastive batch needs at least two samples".into(),
            ));
        }
        if !(temperature > 0.0) {
            return Err(NnError::BadTemperature(temperature));
        }
        let (value, _, _) = supcon_forward(&es.values, es.shape[1], labels, temperature)?;
        ensure_finite("supcon", &[value])?;
        Ok(self.push(
            vec![1],
            vec![value],
            Op::SupCon {
                emb,
                labels: labels.to_vec(),
                temperature,
            },
        ))
    }

    /// Uncertainty-weighted multi-task total: `sum_k exp(-s_k) L_k + s_k`
    /// over scalar losses, with learnable `log_vars` `s`.
    pub fn uncertainty(&mut self, losses: &[Tensor], log_vars: Tensor) -> Result<Tensor, NnError> {
        let lv = &self.nodes[log_vars.0];
        if lv.shape.len() != 1 || lv.shape[0] != losses.len() || losses.is_empty() {
            return Err(NnError::ShapeMismatch(format!(
                "{} log-variances for {} task losses",
                lv.values.len(),
                losses.len()
            )));
        }
        for &loss in losses {
            if self.nodes[loss.0].values.len() != 1 {
                return Err(NnError::NotScalar(self.nodes[loss.0].values.len()));
            }
        }
        let value: f64 = losses
            .iter()
            .zip(&self.nodes[log_vars.0].values)
            .map(|(loss, s)| (-s).exp() * self.nodes[loss.0].values[0] + s)
            .sum();
        ensure_finite("uncertainty", &[value])?;
        Ok(self.push(
            vec![1],
            vec![value],
            Op::Uncertainty {
                losses: losses.to_vec(),
                log_vars,
            },
        ))
    }

    /// Seeds the scalar output with gradient one and sweeps the tape in
    /// reverse, accumulating into every node. Gradients are checked finite.
    pub fn backward(&mut self, output: Tensor) -> Result<(), NnError> {
        if self.nodes[output.0].values.len() != 1 {
            return Err(NnError::NotScalar(self.nodes[output.0].values.len()));
        }
        for node in &mut self.nodes {
            node.grad.fill(0.0);
        }
        self.nodes[output.0].grad[0] = 1.0;
        for i in (0..self.nodes.len()).rev() {
            let op = self.nodes[i].op.clone();
            let g = self.nodes[i].grad.clone();
            if g.iter().all(|x| *x == 0.0) {
                continue;
            }
            match op {
                Op::Leaf => {}
                Op::Dense { x, w, b } => self.backward_dense(x, w, b, &g),
                Op::Conv1d { x, w, b } => self.backward_conv1d(x, w, b, &g),
                Op::Relu { x } => {
                    let active: Vec<bool> =
                        self.nodes[i].values.iter().map(|v| *v > 0.0).collect();
                    let gx = &mut self.nodes[x.0].grad;
                    for (j, (gi, a)) in g.iter().zip(active).enumerate() {
                        if a {
                            gx[j] += gi;
                        }
                    }
                }
                Op::MulMask { x, mask } => {
                    let mv = self.nodes[mask.0].values.clone();
                    let gx = &mut self.nodes[x.0].grad;
                    for (j, (gi, m)) in g.iter().zip(mv).enumerate() {
                        gx[j] += gi * m;
                    }
                }
                Op::MeanPoolTime { x } => {
                    let t_len = self.nodes[x.0].shape[1];
                    let inv = 1.0 / t_len as f64;
                    let gx = &mut self.nodes[x.0].grad;
                    for (c, gi) in g.iter().enumerate() {
                        for slot in &mut gx[c * t_len..(c + 1) * t_len] {
                            *slot += gi * inv;
                        }
                    }
                }
                Op::StackRows { rows } => {
                    let d = self.nodes[rows[0].0].values.len();
                    for (r, row) in rows.iter().enumerate() {
                        let gx = &mut self.nodes[row.0].grad;
                        for (slot, gi) in gx.iter_mut().zip(&g[r * d..(r + 1) * d]) {
                            *slot += gi;
                        }
                    }
                }
                Op::Grl { x, lambda } => {
                    let gx = &mut self.nodes[x.0].grad;
                    for (slot, gi) in gx.iter_mut().zip(&g) {
                        *slot -= lambda * gi;
                    }
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    labels,
                    probs,
                } => {
                    let n = labels.len();
                    let c = self.nodes[logits.0].shape[1];
                    let scale = g[0] / n as f64;
                    let gx = &mut self.nodes[logits.0].grad;
                    for (r, &label) in labels.iter().enumerate() {
                        for j in 0..c {
                            let indicator = if j == label { 1.0 } else { 0.0 };
                            gx[r * c + j] += scale * (probs[r * c + j] - indicator);
                        }
                    }
                }
                Op::Mmd { a, b, bandwidths } => self.backward_mmd(a, b, &bandwidths, g[0]),
                Op::SupCon {
                    emb,
                    labels,
                    temperature,
                } => {
                    let d = self.nodes[emb.0].shape[1];
                    let values = self.nodes[emb.0].values.clone();
                    let gx = supcon_backward(&values, d, &labels, temperature, g[0]);
                    for (slot, gi) in self.nodes[emb.0].grad.iter_mut().zip(gx) {
                        *slot += gi;
                    }
                }
                Op::Uncertainty { losses, log_vars } => {
                    let s = self.nodes[log_vars.0].values.clone();
                    for (k, &loss) in losses.iter().enumerate() {
                        let weight = (-s[k]).exp();
                        let lk = self.nodes[loss.0].values[0];
                        self.nodes[loss.0].grad[0] += g[0] * weight;
                        self.nodes[log_vars.0].grad[k] += g[0] * (1.0 - weight * lk);
                    }
                }
            }
        }
        for node in &self.nodes {
            ensure_finite("backward", &node.grad)?;
        }
        Ok(())
    }

    fn backward_dense(&mut self, x: Tensor, w: Tensor, b: Tensor, g: &[f64]) {
        let n_in = self.nodes[x.0].values.len();
        let xv = self.nodes[x.0].values.clone();
        let wv = self.nodes[w.0].values.clone();
        {
            let gx = &mut self.nodes[x.0].grad;
            for (o, gi) in g.iter().enumerate() {
                for (slot, wi) in gx.iter_mut().zip(&wv[o * n_in..(o + 1) * n_in]) {
                    *slot += gi * wi;
                }
            }
        }
        {
            let gw = &mut self.nodes[w.0].grad;
            for (o, gi) in g.iter().enumerate() {
                for (slot, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(&xv) {
                    *slot += gi * xi;
                }
            }
        }
        let gb = &mut self.nodes[b.0].grad;
        for (slot, gi) in gb.iter_mut().zip(g) {
            *slot += gi;
        }
    }

    fn backward_conv1d(&mut self, x: Tensor, w: Tensor, b: Tensor, g: &[f64]) {
        let (c_in, t_len) = (self.nodes[x.0].shape[0], self.nodes[x.0].shape[1]);
        let (c_out, k) = (self.nodes[w.0].shape[0], self.nodes[w.0].shape[2]);
        let pad = (k - 1) / 2;
        let xv = self.nodes[x.0].values.clone();
        let wv = self.nodes[w.0].values.clone();
        {
            let gx = &mut self.nodes[x.0].grad;
            for o in 0..c_out {
                let g_row = &g[o * t_len..(o + 1) * t_len];
                for c in 0..c_in {
                    let w_row = &wv[(o * c_in + c) * k..(o * c_in + c + 1) * k];
                    let gx_row = &mut gx[c * t_len..(c + 1) * t_len];
                    for (dk, &wi) in w_row.iter().enumerate() {
                        let shift = dk as isize - pad as isize;
                        let lo = (-shift).max(0) as usize;
                        let hi = (t_len as isize - shift).min(t_len as isize) as usize;
                        for tau in lo..hi {
                            gx_row[(tau as isize + shift) as usize] += wi * g_row[tau];
                        }
                    }
                }
            }
        }
        {
            let gw = &mut self.nodes[w.0].grad;
            for o in 0..c_out {
                let g_row = &g[o * t_len..(o + 1) * t_len];
                for c in 0..c_in {
                    let x_row = &xv[c * t_len..(c + 1) * t_len];
                    let gw_row = &mut gw[(o * c_in + c) * k..(o * c_in + c + 1) * k];
                    for (dk, slot) in gw_row.iter_mut().enumerate() {
                        let shift = dk as isize - pad as isize;
                        let lo = (-shift).max(0) as usize;
                        let hi = (t_len as isize - shift).min(t_len as isize) as usize;
                        for tau in lo..hi {
                            *slot += g_row[tau] * x_row[(tau as isize + shift) as usize];
                        }
                    }
                }
            }
        }
        let gb = &mut self.nodes[b.0].grad;
        for (o, slot) in gb.iter_mut().enumerate() {
            *slot += g[o * t_len..(o + 1) * t_len].iter().sum::<f64>();
        }
    }

    fn backward_mmd(&mut self, a: Tensor, b: Tensor, bandwidths: &[f64], g: f64) {
        let d = self.nodes[a.0].shape[1];
        let (na, nb) = (self.nodes[a.0].shape[0], self.nodes[b.0].shape[0]);
        let av = self.nodes[a.0].values.clone();
        let bv = self.nodes[b.0].values.clone();
        let mut ga = vec![0.0; av.len()];
        let mut gb = vec![0.0; bv.len()];
        for &gamma in bandwidths {
            kernel_pair_grad(&av, na, &av, na, d, gamma, g / (na * na) as f64, &mut ga, None);
            kernel_pair_grad(&bv, nb, &bv, nb, d, gamma, g / (nb * nb) as f64, &mut gb, None);
            kernel_pair_grad(
                &av,
                na,
                &bv,
                nb,
                d,
                gamma,
                -2.0 * g / (na * nb) as f64,
                &mut ga,
                Some(&mut gb),
            );
        }
        for (slot, gi) in self.nodes[a.0].grad.iter_mut().zip(&ga) {
            *slot += gi;
        }
        for (slot, gi) in self.nodes[b.0].grad.iter_mut().zip(&gb) {
            *slot += gi;
        }
    }
}

/// Sum of `exp(-gamma |x_i - y_j|^2)` over all ordered pairs.
fn kernel_sum(xs: &[f64], nx: usize, ys: &[f64], ny: usize, d: usize, gamma: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..nx {
        let xi = &xs[i * d..(i + 1) * d];
        for j in 0..ny {
            let yj = &ys[j * d..(j + 1) * d];
            let r2: f64 = xi.iter().zip(yj).map(|(x, y)| (x - y) * (x - y)).sum();
            total += (-gamma * r2).exp();
        }
    }
    total
}

/// Accumulates `coeff * d/dx sum_ij k(x_i, y_j)` into `gx` and, when the two
/// sets are distinct tensors, the matching `y` gradient into `gy`. For a
/// self-sum (`gy` = None) both endpoint contributions land in `gx`.
#[allow(clippy::too_many_arguments)]
fn kernel_pair_grad(
    xs: &[f64],
    nx: usize,
    ys: &[f64],
    ny: usize,
    d: usize,
    gamma: f64,
    coeff: f64,
    gx: &mut [f64],
    mut gy: Option<&mut Vec<f64>>,
) {
    for i in 0..nx {
        for j in 0..ny {
            let xi = &xs[i * d..(i + 1) * d];
            let yj = &ys[j * d..(j + 1) * d];
            let r2: f64 = xi.iter().zip(yj).map(|(x, y)| (x - y) * (x - y)).sum();
            let scale = coeff * (-gamma * r2).exp() * (-2.0 * gamma);
            for (dim, (x, y)) in xi.iter().zip(yj).enumerate() {
                let diff = x - y;
                gx[i * d + dim] += scale * diff;
                match gy.as_deref_mut() {
                    Some(gy) => gy[j * d + dim] -= scale * diff,
                    None => gx[j * d + dim] -= scale * diff,
                }
            }
        }
    }
}

/// Forward pass shared by value and gradient: returns the loss, the
/// L2-normalized rows, and per-row input norms.
fn supcon_forward(
    values: &[f64],
    d: usize,
    labels: &[usize],
    temperature: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>), NnError> {
    let n = labels.len();
    let mut z = values.to_vec();
    let mut norms = vec![0.0; n];
    for (i, norm) in norms.iter_mut().enumerate() {
        let row = &mut z[i * d..(i + 1) * d];
        *norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for v in row {
            *v /= *norm;
        }
    }
    let mut anchors = 0usize;
    let mut total = 0.0;
    for i in 0..n {
        let positives: Vec<usize> = (0..n)
            .filter(|&j| j != i && labels[j] == labels[i])
            .collect();
        if positives.is_empty() {
            continue;
        }
        anchors += 1;
        let sims: Vec<f64> = (0..n)
            .map(|j| {
                z[i * d..(i + 1) * d]
                    .iter()
                    .zip(&z[j * d..(j + 1) * d])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / temperature
            })
            .collect();
        let max = (0..n)
            .filter(|&j| j != i)
            .map(|j| sims[j])
            .fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| (sims[j] - max).exp())
            .sum();
        let log_denom = max + denom.ln();
        let mean_pos: f64 =
            positives.iter().map(|&p| sims[p]).sum::<f64>() / positives.len() as f64;
        total += log_denom - mean_pos;
    }
    if anchors == 0 {
        return Err(NnError::DegenerateBatch(
            "no same-label pair in the batch".into(),
        ));
    }
    Ok((total / anchors as f64, z, norms))
}

fn supcon_backward(values: &[f64], d: usize, labels: &[usize], temperature: f64, g: f64) -> Vec<f64> {
    let n = labels.len();
    let (_, z, norms) =
        supcon_forward(values, d, labels, temperature).expect("validated at forward time");
    let mut anchors = 0usize;
    let mut anchor_sets: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let positives: Vec<usize> = (0..n)
            .filter(|&j| j != i && labels[j] == labels[i])
            .collect();
        if !positives.is_empty() {
            anchors += 1;
        }
        anchor_sets.push(positives);
    }
    let mut gz = vec![0.0; n * d];
    let scale = g / anchors as f64;
    for i in 0..n {
        let positives = &anchor_sets[i];
        if positives.is_empty() {
            continue;
        }
        let sims: Vec<f64> = (0..n)
            .map(|j| {
                z[i * d..(i + 1) * d]
                    .iter()
                    .zip(&z[j * d..(j + 1) * d])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / temperature
            })
            .collect();
        let max = (0..n)
            .filter(|&j| j != i)
            .map(|j| sims[j])
            .fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| (sims[j] - max).exp())
            .sum();
        let inv_pos = 1.0 / positives.len() as f64;
        for j in 0..n {
            if j == i {
                continue;
            }
            let softmax = (sims[j] - max).exp() / denom;
            let positive = if labels[j] == labels[i] { inv_pos } else { 0.0 };
            let gs = scale * (softmax - positive) / temperature;
            for dim in 0..d {
                gz[i * d + dim] += gs * z[j * d + dim];
                gz[j * d + dim] += gs * z[i * d + dim];
            }
        }
    }
    // Through the row normalization z = x / |x|.
    let mut gx = vec![0.0; n * d];
    for i in 0..n {
        let zi = &z[i * d..(i + 1) * d];
        let gi = &gz[i * d..(i + 1) * d];
        let dot: f64 = zi.iter().zip(gi).map(|(a, b)| a * b).sum();
        for dim in 0..d {
            gx[i * d + dim] = (gi[dim] - dot * zi[dim]) / norms[i];
        }
    }
    gx
}
