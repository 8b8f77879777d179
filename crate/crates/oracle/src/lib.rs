//! Deliberately naive reference implementations.
//!
//! Everything here works on raw slices, `[f64; 4]` boxes and plain scalar
//! loops so that it shares no code path with `tio-core`. The kernels in the
//! main crate are checked against these in unit tests, in the acceptance
//! suite and by `tio selftest`.

/// Row-major, channel-innermost index.
#[inline]
fn at(w: usize, c: usize, i: usize, j: usize, k: usize) -> usize {
    (i * w + j) * c + k
}

/// Bilinear sample written as a sum of tent kernels over every grid point.
///
/// Coordinates outside `[-1, h]` (rows) or `[-1, w]` (columns) give zero;
/// anything inside that band is clamped onto the grid first.
pub fn tent_bilinear(data: &[f32], h: usize, w: usize, c: usize, x: f64, y: f64, k: usize) -> f64 {
    if y < -1.0 || y > h as f64 || x < -1.0 || x > w as f64 {
        return 0.0;
    }
    let yc = y.clamp(0.0, (h - 1) as f64);
    let xc = x.clamp(0.0, (w - 1) as f64);
    let mut total = 0.0;
    for i in 0..h {
        let wy = (1.0 - (yc - i as f64).abs()).max(0.0);
        if wy == 0.0 {
            continue;
        }
        for j in 0..w {
            let wx = (1.0 - (xc - j as f64).abs()).max(0.0);
            total += wy * wx * data[at(w, c, i, j, k)] as f64;
        }
    }
    total
}

/// ROI align over a box `[x, y, w, h]` in feature coordinates. Output is
/// `out_h * out_w * c`, channel-innermost.
pub fn roi_align(
    data: &[f32],
    h: usize,
    w: usize,
    c: usize,
    roi: [f64; 4],
    out_h: usize,
    out_w: usize,
    samples: usize,
) -> Vec<f64> {
    let [bx, by, bw, bh] = roi;
    let cell_w = bw / out_w as f64;
    let cell_h = bh / out_h as f64;
    let mut out = vec![0.0; out_h * out_w * c];
    for oi in 0..out_h {
        for oj in 0..out_w {
            for k in 0..c {
                let mut acc = 0.0;
                for sy in 0..samples {
                    for sx in 0..samples {
                        let y = by + oi as f64 * cell_h + (sy as f64 + 0.5) * cell_h / samples as f64;
                        let x = bx + oj as f64 * cell_w + (sx as f64 + 0.5) * cell_w / samples as f64;
                        acc += tent_bilinear(data, h, w, c, x, y, k);
                    }
                }
                out[at(out_w, c, oi, oj, k)] = acc / (samples * samples) as f64;
            }
        }
    }
    out
}

/// Valid-mode per-channel cross-correlation, quadruple loop.
pub fn depthwise_xcorr(
    search: &[f32],
    sh: usize,
    sw: usize,
    template: &[f32],
    th: usize,
    tw: usize,
    c: usize,
) -> Vec<f64> {
    let oh = sh - th + 1;
    let ow = sw - tw + 1;
    let mut out = vec![0.0; oh * ow * c];
    for k in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = 0.0f64;
                for u in 0..th {
                    for v in 0..tw {
                        acc += template[at(tw, c, u, v, k)] as f64
                            * search[at(sw, c, i + u, j + v, k)] as f64;
                    }
                }
                out[at(ow, c, i, j, k)] = acc;
            }
        }
    }
    out
}

/// Zero-padded stride-1 convolution (cross-correlation form).
///
/// `weights` is laid out `[out_c][kh][kw][in_c]`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d(
    input: &[f32],
    h: usize,
    w: usize,
    in_c: usize,
    weights: &[f32],
    bias: &[f32],
    out_c: usize,
    kh: usize,
    kw: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = h + 2 * pad - kh + 1;
    let ow = w + 2 * pad - kw + 1;
    let mut out = vec![0.0; oh * ow * out_c];
    for o in 0..out_c {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = bias[o] as f64;
                for u in 0..kh {
                    for v in 0..kw {
                        let yi = i as isize + u as isize - pad as isize;
                        let xi = j as isize + v as isize - pad as isize;
                        if yi < 0 || xi < 0 || yi >= h as isize || xi >= w as isize {
                            continue;
                        }
                        for k in 0..in_c {
                            let wv = weights[((o * kh + u) * kw + v) * in_c + k] as f64;
                            acc += wv * input[at(w, in_c, yi as usize, xi as usize, k)] as f64;
                        }
                    }
                }
                out[at(ow, out_c, i, j, o)] = acc;
            }
        }
    }
    (out, oh, ow)
}

/// IoU of two `[x, y, w, h]` boxes.
pub fn iou_xywh(a: [f64; 4], b: [f64; 4]) -> f64 {
    let ix = (a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0]);
    let iy = (a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1]);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    inter / (a[2] * a[3] + b[2] * b[3] - inter)
}

/// IoU of two boxes given as (l, t, r, b) distances from a shared anchor.
pub fn iou_ltrb(p: [f64; 4], g: [f64; 4]) -> f64 {
    // Place both boxes around an anchor at the origin and reuse the xywh path.
    let to_xywh = |d: [f64; 4]| [-d[0], -d[1], d[0] + d[2], d[1] + d[3]];
    let (a, b) = (to_xywh(p), to_xywh(g));
    if a[2] <= 0.0 || a[3] <= 0.0 || b[2] <= 0.0 || b[3] <= 0.0 {
        return 0.0;
    }
    iou_xywh(a, b)
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let hi = f(&probe);
            probe[i] = x[i] - step;
            let lo = f(&probe);
            probe[i] = x[i];
            (hi - lo) / (2.0 * step)
        })
        .collect()
}

/// Greedy one-to-one matching, re-implemented as an explicit trace.
///
/// Predictions are visited by descending score (ties: lower index first);
/// each takes the unmatched ground truth with the highest IoU above `tau`
/// (ties: lower index). Returns the matched ground-truth index per prediction.
pub fn greedy_match(preds: &[([f64; 4], f64)], gts: &[[f64; 4]], tau: f64) -> Vec<Option<usize>> {
    let mut visited = vec![false; preds.len()];
    let mut taken = vec![false; gts.len()];
    let mut result = vec![None; preds.len()];
    for _ in 0..preds.len() {
        // Pick the next prediction by linear scan rather than sorting.
        let mut best: Option<usize> = None;
        for (i, p) in preds.iter().enumerate() {
            if visited[i] {
                continue;
            }
            match best {
                None => best = Some(i),
                Some(b) if p.1 > preds[b].1 => best = Some(i),
                _ => {}
            }
        }
        let i = best.expect("unvisited prediction");
        visited[i] = true;
        let mut pick: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = iou_xywh(preds[i].0, *gt);
            if v > tau && pick.map_or(true, |(_, bv)| v > bv) {
                pick = Some((g, v));
            }
        }
        if let Some((g, _)) = pick {
            taken[g] = true;
            result[i] = Some(g);
        }
    }
    result
}

/// All-point AP as a sum over true positives: each TP contributes
/// `1 / total_gt` recall times the best precision reachable at or below its
/// rank. Ties in score keep input order.
pub fn average_precision(labeled: &[(f64, bool)], total_gt: usize) -> f64 {
    if total_gt == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..labeled.len()).collect();
    order.sort_by(|&a, &b| labeled[b].0.partial_cmp(&labeled[a].0).unwrap().then(a.cmp(&b)));
    let precisions: Vec<f64> = (0..order.len())
        .map(|k| {
            let tp = order[..=k].iter().filter(|&&i| labeled[i].1).count();
            tp as f64 / (k + 1) as f64
        })
        .collect();
    let mut ap = 0.0;
    for (k, &i) in order.iter().enumerate() {
        if labeled[i].1 {
            let best = precisions[k..].iter().cloned().fold(0.0, f64::max);
            ap += best / total_gt as f64;
        }
    }
    ap
}

/// Greedy NMS written as a fixed-point over a "removed" mask.
pub fn greedy_nms(boxes: &[([f64; 4], f64)], thr: f64) -> Vec<usize> {
    let mut removed = vec![false; boxes.len()];
    let mut kept = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for (i, b) in boxes.iter().enumerate() {
            if removed[i] {
                continue;
            }
            if best.map_or(true, |k| b.1 > boxes[k].1) {
                best = Some(i);
            }
        }
        let Some(k) = best else { break };
        kept.push(k);
        removed[k] = true;
        for i in 0..boxes.len() {
            if !removed[i] && iou_xywh(boxes[k].0, boxes[i].0) > thr {
                removed[i] = true;
            }
        }
    }
    kept
}
