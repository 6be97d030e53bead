use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureMap, Region, CHANNELS};

/// Hidden width of both convolution layers.
pub const HIDDEN: usize = 16;
/// Head channels before the class logits: row offset, column offset,
/// objectness, positiveness, height.
pub const HEAD_FIXED: usize = 5;
pub const DEFAULT_CLASSES: usize = 4;
pub const CLASS_NAMES: [&str; DEFAULT_CLASSES] = ["vehicle", "pedestrian", "bicyclist", "other"];

pub(crate) mod out {
    pub const OFF_R: usize = 0;
    pub const OFF_C: usize = 1;
    pub const OBJ: usize = 2;
    pub const POS: usize = 3;
    pub const HEIGHT: usize = 4;
    pub const CLASS0: usize = 5;
}

/// A convolution with `k × k` kernel, stored as `w[((tap * cin) + i) * cout + o]`.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Conv {
    pub k: usize,
    pub cin: usize,
    pub cout: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Conv {
    fn init(k: usize, cin: usize, cout: usize, rng: &mut ChaCha8Rng) -> Self {
        let s = 1.0 / ((k * k * cin) as f64).sqrt();
        let w = (0..k * k * cin * cout).map(|_| rng.gen_range(-s..=s)).collect();
        let b = (0..cout).map(|_| rng.gen_range(-s..=s)).collect();
        Conv { k, cin, cout, w, b }
    }

    fn zeros_like(&self) -> Self {
        Conv { w: vec![0.0; self.w.len()], b: vec![0.0; self.b.len()], ..*self }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Detector weights plus the fixed per-channel input normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorParams {
    pub classes: usize,
    pub seed: u64,
    pub input_shift: [f64; CHANNELS],
    pub input_scale: [f64; CHANNELS],
    pub(crate) conv1: Conv,
    pub(crate) conv2: Conv,
    pub(crate) head: Conv,
    /// Free-form training metadata echoed into the weights file.
    pub metadata: serde_json::Value,
}

impl DetectorParams {
    /// Uniform `[-s, s]` initialization with `s = 1/√fan_in`.
    pub fn init(classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DetectorParams {
            classes,
            seed,
            input_shift: [0.0; CHANNELS],
            input_scale: [1.0; CHANNELS],
            conv1: Conv::init(3, CHANNELS, HIDDEN, &mut rng),
            conv2: Conv::init(3, HIDDEN, HIDDEN, &mut rng),
            head: Conv::init(1, HIDDEN, HEAD_FIXED + classes, &mut rng),
            metadata: serde_json::Value::Null,
        }
    }

    /// All weights and biases set to zero.
    pub fn zeros(classes: usize) -> Self {
        let mut p = Self::init(classes, 0);
        for c in [&mut p.conv1, &mut p.conv2, &mut p.head] {
            *c = c.zeros_like();
        }
        p
    }

    pub fn out_channels(&self) -> usize {
        HEAD_FIXED + self.classes
    }

    pub(crate) fn zeros_like(&self) -> Self {
        DetectorParams {
            conv1: self.conv1.zeros_like(),
            conv2: self.conv2.zeros_like(),
            head: self.head.zeros_like(),
            metadata: serde_json::Value::Null,
            ..self.clone()
        }
    }

    /// Mutable views of every trainable tensor, in a fixed order.
    pub(crate) fn tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.conv1.w,
            &mut self.conv1.b,
            &mut self.conv2.w,
            &mut self.conv2.b,
            &mut self.head.w,
            &mut self.head.b,
        ]
    }

    pub(crate) fn tensors(&self) -> [&Vec<f64>; 6] {
        [&self.conv1.w, &self.conv1.b, &self.conv2.w, &self.conv2.b, &self.head.w, &self.head.b]
    }

    pub fn param_count(&self) -> usize {
        self.conv1.param_count() + self.conv2.param_count() + self.head.param_count()
    }
}

/// Activated per-cell metrics. Cells outside the evaluated region are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutput {
    pub rows: usize,
    pub cols: usize,
    pub classes: usize,
    /// Per cell: `[off_r, off_c, objectness, positiveness, height, p_0 .. p_{K-1}]`.
    pub data: Vec<f64>,
}

impl ModelOutput {
    pub fn zeros(rows: usize, cols: usize, classes: usize) -> Self {
        ModelOutput { rows, cols, classes, data: vec![0.0; rows * cols * (HEAD_FIXED + classes)] }
    }

    pub fn stride(&self) -> usize {
        HEAD_FIXED + self.classes
    }

    pub fn cell(&self, r: usize, c: usize) -> &[f64] {
        let s = self.stride();
        let i = (r * self.cols + c) * s;
        &self.data[i..i + s]
    }

    pub fn cell_mut(&mut self, r: usize, c: usize) -> &mut [f64] {
        let s = self.stride();
        let i = (r * self.cols + c) * s;
        &mut self.data[i..i + s]
    }

    pub fn objectness(&self, r: usize, c: usize) -> f64 {
        self.cell(r, c)[out::OBJ]
    }

    pub fn positiveness(&self, r: usize, c: usize) -> f64 {
        self.cell(r, c)[out::POS]
    }

    pub fn height(&self, r: usize, c: usize) -> f64 {
        self.cell(r, c)[out::HEIGHT]
    }

    /// Predicted center offset in cells `(rows, cols)`.
    pub fn offset(&self, r: usize, c: usize) -> (f64, f64) {
        let cell = self.cell(r, c);
        (cell[out::OFF_R], cell[out::OFF_C])
    }

    pub fn class_probs(&self, r: usize, c: usize) -> &[f64] {
        &self.cell(r, c)[out::CLASS0..]
    }

    /// Copy the cells of `region` from `other`.
    pub fn splice(&mut self, other: &ModelOutput, region: &Region) {
        for (r, c) in region.cells() {
            let src = other.cell(r, c).to_vec();
            self.cell_mut(r, c).copy_from_slice(&src);
        }
    }
}

/// Row-major channel-last activations over a region of the grid.
#[derive(Clone, Debug)]
pub(crate) struct Patch {
    pub region: Region,
    pub ch: usize,
    pub data: Vec<f64>,
}

impl Patch {
    fn zeros(region: Region, ch: usize) -> Self {
        Patch { region, ch, data: vec![0.0; region.len() * ch] }
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> usize {
        self.region.offset(r, c) * self.ch
    }
}

/// Intermediate activations of one forward pass, needed by the backward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    pub(crate) out_region: Region,
    pub(crate) x: Patch,
    pub(crate) h1: Patch,
    pub(crate) h2: Patch,
    pub(crate) logits: Patch,
}

impl Trace {
    pub fn out_region(&self) -> Region {
        self.out_region
    }

    pub fn input_region(&self) -> Region {
        self.x.region
    }
}

fn check_shape(params: &DetectorParams, x: &FeatureMap, region: &Region) -> Result<()> {
    if x.data.len() != x.rows * x.cols * CHANNELS {
        return Err(Error::InvalidInput("feature map data length does not match its shape".into()));
    }
    if region.r1 > x.rows || region.c1 > x.cols {
        return Err(Error::InvalidInput(format!(
            "region {region:?} exceeds the {}×{} feature grid",
            x.rows, x.cols
        )));
    }
    if params.conv1.cin != CHANNELS {
        return Err(Error::InvalidInput("detector expects 8 input channels".into()));
    }
    Ok(())
}

/// Same-padded convolution evaluated on `out_region`, reading from `input`
/// (which must cover `out_region` dilated by `k/2`, clipped to the grid).
fn conv_forward(conv: &Conv, input: &Patch, out_region: Region, rows: usize, cols: usize, relu: bool) -> Patch {
    let mut out = Patch::zeros(out_region, conv.cout);
    let half = (conv.k / 2) as i64;
    let mut acc = vec![0.0; conv.cout];
    for (r, c) in out_region.cells() {
        acc.copy_from_slice(&conv.b);
        for dr in -half..=half {
            let sr = r as i64 + dr;
            if sr < 0 || sr >= rows as i64 {
                continue;
            }
            for dc in -half..=half {
                let sc = c as i64 + dc;
                if sc < 0 || sc >= cols as i64 {
                    continue;
                }
                let tap = ((dr + half) * conv.k as i64 + (dc + half)) as usize;
                let xi = input.at(sr as usize, sc as usize);
                let xs = &input.data[xi..xi + conv.cin];
                let wt = &conv.w[tap * conv.cin * conv.cout..(tap + 1) * conv.cin * conv.cout];
                for (i, &xv) in xs.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let wrow = &wt[i * conv.cout..(i + 1) * conv.cout];
                    for (a, w) in acc.iter_mut().zip(wrow) {
                        *a += w * xv;
                    }
                }
            }
        }
        let o = out.at(r, c);
        for (dst, &a) in out.data[o..o + conv.cout].iter_mut().zip(&acc) {
            *dst = if relu { a.max(0.0) } else { a };
        }
    }
    out
}

/// Back-propagate `d_out` (already through any activation) into the input
/// patch and, optionally, into the parameter gradients.
fn conv_backward(
    conv: &Conv,
    input: &Patch,
    d_out: &Patch,
    rows: usize,
    cols: usize,
    d_input: Option<&mut Patch>,
    mut d_conv: Option<&mut Conv>,
) {
    let half = (conv.k / 2) as i64;
    let mut d_input = d_input;
    for (r, c) in d_out.region.cells() {
        let go = d_out.at(r, c);
        let g = &d_out.data[go..go + conv.cout];
        if g.iter().all(|&v| v == 0.0) {
            continue;
        }
        if let Some(dc) = d_conv.as_deref_mut() {
            for (db, gv) in dc.b.iter_mut().zip(g) {
                *db += gv;
            }
        }
        for dr in -half..=half {
            let sr = r as i64 + dr;
            if sr < 0 || sr >= rows as i64 {
                continue;
            }
            for dcol in -half..=half {
                let sc = c as i64 + dcol;
                if sc < 0 || sc >= cols as i64 {
                    continue;
                }
                let tap = ((dr + half) * conv.k as i64 + (dcol + half)) as usize;
                let xi = input.at(sr as usize, sc as usize);
                let wbase = tap * conv.cin * conv.cout;
                for i in 0..conv.cin {
                    let wrow = &conv.w[wbase + i * conv.cout..wbase + (i + 1) * conv.cout];
                    if let Some(di) = d_input.as_deref_mut() {
                        if di.region.contains(sr as usize, sc as usize) {
                            let dot: f64 = wrow.iter().zip(g).map(|(w, gv)| w * gv).sum();
                            let dii = di.at(sr as usize, sc as usize);
                            di.data[dii + i] += dot;
                        }
                    }
                    if let Some(dc) = d_conv.as_deref_mut() {
                        let xv = input.data[xi + i];
                        if xv != 0.0 {
                            for (dw, gv) in dc.w[wbase + i * conv.cout..wbase + (i + 1) * conv.cout].iter_mut().zip(g) {
                                *dw += xv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax(z: &[f64], out: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - m).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

/// Forward pass on `region`, recording activations.
pub fn forward_traced(params: &DetectorParams, x: &FeatureMap, region: Region) -> Result<(ModelOutput, Trace)> {
    check_shape(params, x, &region)?;
    let (rows, cols) = (x.rows, x.cols);
    let h1_region = region.dilate(1, rows, cols);
    let in_region = region.dilate(2, rows, cols);
    let mut xin = Patch::zeros(in_region, CHANNELS);
    for (r, c) in in_region.cells() {
        let o = xin.at(r, c);
        for (ch, v) in x.cell(r, c).iter().enumerate() {
            xin.data[o + ch] = (v - params.input_shift[ch]) * params.input_scale[ch];
        }
    }
    let h1 = conv_forward(&params.conv1, &xin, h1_region, rows, cols, true);
    let h2 = conv_forward(&params.conv2, &h1, region, rows, cols, true);
    let logits = conv_forward(&params.head, &h2, region, rows, cols, false);
    let mut output = ModelOutput::zeros(rows, cols, params.classes);
    for (r, c) in region.cells() {
        let li = logits.at(r, c);
        let z = &logits.data[li..li + params.out_channels()];
        let cell = output.cell_mut(r, c);
        cell[out::OFF_R] = z[out::OFF_R];
        cell[out::OFF_C] = z[out::OFF_C];
        cell[out::OBJ] = sigmoid(z[out::OBJ]);
        cell[out::POS] = sigmoid(z[out::POS]);
        cell[out::HEIGHT] = z[out::HEIGHT];
        softmax(&z[out::CLASS0..], &mut cell[out::CLASS0..]);
    }
    Ok((output, Trace { out_region: region, x: xin, h1, h2, logits }))
}

/// Forward pass over the whole grid.
pub fn forward(params: &DetectorParams, x: &FeatureMap) -> Result<ModelOutput> {
    forward_region(params, x, Region::full(x.rows, x.cols))
}

/// Forward pass producing outputs only on `region`; each evaluated cell is
/// bit-identical to the full-grid result.
pub fn forward_region(params: &DetectorParams, x: &FeatureMap, region: Region) -> Result<ModelOutput> {
    forward_traced(params, x, region).map(|(o, _)| o)
}

/// Gradient w.r.t. the logits of `⟨adjoint, activated output⟩` on the trace's region.
pub(crate) fn logit_adjoint(params: &DetectorParams, output: &ModelOutput, adjoint: &ModelOutput, trace: &Trace) -> Patch {
    let k = params.out_channels();
    let mut d = Patch::zeros(trace.out_region, k);
    for (r, c) in trace.out_region.cells() {
        let y = output.cell(r, c);
        let a = adjoint.cell(r, c);
        let o = d.at(r, c);
        let g = &mut d.data[o..o + k];
        g[out::OFF_R] = a[out::OFF_R];
        g[out::OFF_C] = a[out::OFF_C];
        g[out::OBJ] = a[out::OBJ] * y[out::OBJ] * (1.0 - y[out::OBJ]);
        g[out::POS] = a[out::POS] * y[out::POS] * (1.0 - y[out::POS]);
        g[out::HEIGHT] = a[out::HEIGHT];
        let p = &y[out::CLASS0..];
        let ap = &a[out::CLASS0..];
        let mean: f64 = p.iter().zip(ap).map(|(p, a)| p * a).sum();
        for j in 0..params.classes {
            g[out::CLASS0 + j] = p[j] * (ap[j] - mean);
        }
    }
    d
}

/// Back-propagate logit adjoints; returns the input gradient (raw feature
/// units, nonzero only on the trace's input region) and optionally
/// accumulates parameter gradients.
pub(crate) fn backward_logits(
    params: &DetectorParams,
    trace: &Trace,
    d_logits: &Patch,
    rows: usize,
    cols: usize,
    mut d_params: Option<&mut DetectorParams>,
    want_input: bool,
) -> Option<FeatureMap> {
    let mut d_h2 = Patch::zeros(trace.h2.region, HIDDEN);
    conv_backward(
        &params.head,
        &trace.h2,
        d_logits,
        rows,
        cols,
        Some(&mut d_h2),
        d_params.as_deref_mut().map(|p| &mut p.head),
    );
    for (d, h) in d_h2.data.iter_mut().zip(&trace.h2.data) {
        if *h <= 0.0 {
            *d = 0.0;
        }
    }
    let mut d_h1 = Patch::zeros(trace.h1.region, HIDDEN);
    conv_backward(
        &params.conv2,
        &trace.h1,
        &d_h2,
        rows,
        cols,
        Some(&mut d_h1),
        d_params.as_deref_mut().map(|p| &mut p.conv2),
    );
    for (d, h) in d_h1.data.iter_mut().zip(&trace.h1.data) {
        if *h <= 0.0 {
            *d = 0.0;
        }
    }
    let mut d_x = want_input.then(|| Patch::zeros(trace.x.region, CHANNELS));
    conv_backward(
        &params.conv1,
        &trace.x,
        &d_h1,
        rows,
        cols,
        d_x.as_mut(),
        d_params.as_deref_mut().map(|p| &mut p.conv1),
    );
    d_x.map(|dx| {
        let mut map = FeatureMap::zeros(rows, cols);
        for (r, c) in dx.region.cells() {
            let o = dx.at(r, c);
            for ch in 0..CHANNELS {
                map.set(r, c, ch, dx.data[o + ch] * params.input_scale[ch]);
            }
        }
        map
    })
}

/// Gradient of `⟨adjoint, M(x)⟩` w.r.t. `x` using a recorded trace.
pub fn backward_region(params: &DetectorParams, trace: &Trace, output: &ModelOutput, adjoint: &ModelOutput) -> FeatureMap {
    let d_logits = logit_adjoint(params, output, adjoint, trace);
    backward_logits(params, trace, &d_logits, output.rows, output.cols, None, true).expect("input gradient requested")
}

/// Gradient of `⟨adjoint, M(x)⟩` w.r.t. the input feature map.
pub fn backward(params: &DetectorParams, x: &FeatureMap, adjoint: &ModelOutput) -> Result<FeatureMap> {
    if adjoint.rows != x.rows || adjoint.cols != x.cols || adjoint.classes != params.classes {
        return Err(Error::InvalidInput("adjoint shape does not match the model output".into()));
    }
    let (output, trace) = forward_traced(params, x, Region::full(x.rows, x.cols))?;
    Ok(backward_region(params, &trace, &output, adjoint))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_map(rows: usize, cols: usize, seed: u64) -> FeatureMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = FeatureMap::zeros(rows, cols);
        for v in m.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        m
    }

    #[test]
    fn zero_weights_give_neutral_outputs() {
        let p = DetectorParams::zeros(4);
        let o = forward(&p, &random_map(6, 7, 1)).unwrap();
        for r in 0..6 {
            for c in 0..7 {
                assert_eq!(o.objectness(r, c), 0.5);
                assert_eq!(o.positiveness(r, c), 0.5);
                assert!(o.class_probs(r, c).iter().all(|&p| p == 0.25));
            }
        }
    }

    #[test]
    fn deterministic_and_region_consistent() {
        let p = DetectorParams::init(4, 3);
        let x = random_map(12, 10, 2);
        let a = forward(&p, &x).unwrap();
        let b = forward(&p, &x).unwrap();
        assert_eq!(a, b);
        let region = Region { r0: 3, r1: 7, c0: 0, c1: 4 };
        let part = forward_region(&p, &x, region).unwrap();
        for (r, c) in region.cells() {
            assert_eq!(part.cell(r, c), a.cell(r, c));
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = DetectorParams::init(4, 3);
        let mut x = random_map(4, 4, 2);
        x.data.pop();
        assert!(matches!(forward(&p, &x), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn zero_adjoint_gives_zero_gradient() {
        let p = DetectorParams::init(4, 5);
        let x = random_map(6, 6, 9);
        let g = backward(&p, &x, &ModelOutput::zeros(6, 6, 4)).unwrap();
        assert!(g.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_cell_adjoint_has_5x5_support() {
        let p = DetectorParams::init(4, 5);
        let x = random_map(11, 11, 9);
        let mut adj = ModelOutput::zeros(11, 11, 4);
        for v in adj.cell_mut(5, 5) {
            *v = 1.0;
        }
        let g = backward(&p, &x, &adj).unwrap();
        for r in 0..11usize {
            for c in 0..11usize {
                let inside = r.abs_diff(5) <= 2 && c.abs_diff(5) <= 2;
                if !inside {
                    assert!(g.cell(r, c).iter().all(|&v| v == 0.0), "({r},{c})");
                }
            }
        }
        assert!(g.cell(5, 5).iter().any(|&v| v != 0.0));
    }
}
