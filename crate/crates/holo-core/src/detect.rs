//! Recover sub-pixel photon positions from rendered frames.

use ndarray::Array2;
use thiserror::Error;

use crate::photonsim::{EventKind, FrameStack, PhotonEvent};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("window is degenerate (no contrast)")]
    DegenerateWindow,
    #[error("window has fewer than 9 pixels above zero")]
    InsufficientSupport,
}

/// A local maximum above threshold together with its surrounding patch.
#[derive(Debug, Clone)]
pub struct FlashCandidate {
    pub frame_index: usize,
    /// Peak pixel `(x, y)` in frame coordinates.
    pub peak: (usize, usize),
    /// Odd-sized patch of counts containing the peak.
    pub window: Array2<f64>,
    /// Frame position `(x, y)` of `window[[0, 0]]`.
    pub window_origin: (usize, usize),
}

/// Result of fitting one flash: center in frame coordinates plus shape
/// parameters. `converged = false` marks the weighted-centroid fallback.
#[derive(Debug, Clone, Copy)]
pub struct FlashFit {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub converged: bool,
}

/// Find local maxima above `threshold`; maxima closer than `window_radius`
/// collapse onto the brighter one. Windows are `(2r+1)` squared, shifted
/// inward at the frame border so the peak stays inside.
pub fn find_flashes(
    frame: &Array2<f64>,
    threshold: f64,
    window_radius: usize,
) -> Vec<FlashCandidate> {
    let (h, w) = frame.dim();
    let side = 2 * window_radius + 1;
    debug_assert!(w >= side && h >= side, "frame smaller than the fit window");
    let mut peaks: Vec<(f64, usize, usize)> = Vec::new();
    for j in 0..h {
        for i in 0..w {
            let v = frame[[j, i]];
            if v <= threshold {
                continue;
            }
            let mut is_peak = true;
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    if dj == 0 && di == 0 {
                        continue;
                    }
                    let (nj, ni) = (j as i64 + dj, i as i64 + di);
                    if nj < 0 || ni < 0 || nj >= h as i64 || ni >= w as i64 {
                        continue;
                    }
                    let nv = frame[[nj as usize, ni as usize]];
                    // break plateau ties toward the first pixel in scan order
                    let earlier = dj < 0 || (dj == 0 && di < 0);
                    if nv > v || (nv == v && earlier) {
                        is_peak = false;
                    }
                }
            }
            if is_peak {
                peaks.push((v, i, j));
            }
        }
    }
    peaks.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut kept: Vec<(f64, usize, usize)> = Vec::new();
    let r2 = (window_radius * window_radius) as f64;
    for p in peaks {
        let close = kept.iter().any(|k| {
            let dx = p.1 as f64 - k.1 as f64;
            let dy = p.2 as f64 - k.2 as f64;
            dx * dx + dy * dy < r2
        });
        if !close {
            kept.push(p);
        }
    }

    kept.into_iter()
        .map(|(_, i, j)| {
            let x0 = i.saturating_sub(window_radius).min(w - side);
            let y0 = j.saturating_sub(window_radius).min(h - side);
            let window = frame
                .slice(ndarray::s![y0..y0 + side, x0..x0 + side])
                .to_owned();
            FlashCandidate { frame_index: 0, peak: (i, j), window, window_origin: (x0, y0) }
        })
        .collect()
}

fn normal_cdf(t: f64) -> f64 {
    0.5 * (1.0 + libm::erf(t / std::f64::consts::SQRT_2))
}

fn normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (std::f64::consts::TAU).sqrt()
}

/// Pixel-integrated Gaussian along one axis and its derivatives with respect
/// to center and sigma.
fn cell(edge: f64, center: f64, sigma: f64) -> (f64, f64, f64) {
    let t0 = (edge - center) / sigma;
    let t1 = (edge + 1.0 - center) / sigma;
    let g = normal_cdf(t1) - normal_cdf(t0);
    let dc = -(normal_pdf(t1) - normal_pdf(t0)) / sigma;
    let ds = -(t1 * normal_pdf(t1) - t0 * normal_pdf(t0)) / sigma;
    (g, dc, ds)
}

fn solve5(mut a: [[f64; 5]; 5], mut b: [f64; 5]) -> Option<[f64; 5]> {
    for col in 0..5 {
        let mut piv = col;
        for row in col + 1..5 {
            if a[row][col].abs() > a[piv][col].abs() {
                piv = row;
            }
        }
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..5 {
            let f = a[row][col] / a[col][col];
            for k in col..5 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 5];
    for col in (0..5).rev() {
        let mut s = b[col];
        for k in col + 1..5 {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Some(x)
}

fn weighted_centroid(window: &Array2<f64>, floor: f64) -> (f64, f64, f64, f64) {
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for ((j, i), &v) in window.indexed_iter() {
        let wt = (v - floor).max(0.0);
        sw += wt;
        sx += wt * (i as f64 + 0.5);
        sy += wt * (j as f64 + 0.5);
    }
    let cx = sx / sw;
    let cy = sy / sw;
    let mut svar = 0.0;
    for ((j, i), &v) in window.indexed_iter() {
        let wt = (v - floor).max(0.0);
        let dx = i as f64 + 0.5 - cx;
        let dy = j as f64 + 0.5 - cy;
        svar += wt * (dx * dx + dy * dy);
    }
    (cx, cy, (svar / (2.0 * sw)).sqrt(), sw)
}

fn model_cost(window: &Array2<f64>, p: &[f64; 5]) -> f64 {
    let [a, x, y, s, b] = *p;
    let mut cost = 0.0;
    for ((j, i), &v) in window.indexed_iter() {
        let (gx, _, _) = cell(i as f64, x, s);
        let (gy, _, _) = cell(j as f64, y, s);
        let r = v - (b + a * gx * gy);
        cost += r * r;
    }
    cost
}

/// Least-squares fit of an isotropic pixel-integrated Gaussian with constant
/// offset. Levenberg-damped normal equations; on non-convergence or a
/// singular system the fit falls back to the intensity-weighted centroid and
/// reports `converged = false`.
pub fn fit_centroid(candidate: &FlashCandidate) -> Result<FlashFit, DetectError> {
    let window = &candidate.window;
    let above_zero = window.iter().filter(|&&v| v > 0.0).count();
    if above_zero < 9 {
        return Err(DetectError::InsufficientSupport);
    }
    let max = window.iter().cloned().fold(f64::MIN, f64::max);
    let min = window.iter().cloned().fold(f64::MAX, f64::min);
    if !(max - min > 1e-12 * max.abs().max(1.0)) {
        return Err(DetectError::DegenerateWindow);
    }

    let (side_y, side_x) = window.dim();
    let half = (side_x.min(side_y) / 2) as f64;
    let (cx, cy, s0, mass) = weighted_centroid(window, min.max(0.0));
    let mut p = [mass.max(1e-12), cx, cy, s0.clamp(0.5, half.max(0.5)), min.max(0.0)];
    let mut lambda = 1e-3;
    let mut cost = model_cost(window, &p);
    let mut converged = false;
    let mut any_step = false;

    for _ in 0..100 {
        // build normal equations at p
        let mut jtj = [[0.0f64; 5]; 5];
        let mut jtr = [0.0f64; 5];
        let [a, x, y, s, b] = p;
        for ((j, i), &v) in window.indexed_iter() {
            let (gx, dgx_dx, dgx_ds) = cell(i as f64, x, s);
            let (gy, dgy_dy, dgy_ds) = cell(j as f64, y, s);
            let m = b + a * gx * gy;
            let r = v - m;
            let grad = [
                gx * gy,
                a * dgx_dx * gy,
                a * gx * dgy_dy,
                a * (dgx_ds * gy + gx * dgy_ds),
                1.0,
            ];
            for u in 0..5 {
                jtr[u] += grad[u] * r;
                for w in u..5 {
                    jtj[u][w] += grad[u] * grad[w];
                }
            }
        }
        for u in 0..5 {
            for w in 0..u {
                jtj[u][w] = jtj[w][u];
            }
        }

        let mut improved = false;
        for _ in 0..20 {
            let mut damped = jtj;
            for u in 0..5 {
                damped[u][u] += lambda * jtj[u][u].max(1e-12);
            }
            let Some(step) = solve5(damped, jtr) else { break };
            let mut trial = p;
            for u in 0..5 {
                trial[u] += step[u];
            }
            trial[3] = trial[3].abs().max(0.05);
            let trial_cost = model_cost(window, &trial);
            if trial_cost <= cost {
                let step_norm: f64 = step.iter().map(|v| v * v).sum::<f64>().sqrt();
                let scale: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
                let delta = cost - trial_cost;
                p = trial;
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if step_norm < 1e-10 * scale || delta < 1e-14 * cost.max(1e-300) {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        any_step = any_step || improved;
        if converged {
            break;
        }
        if !improved {
            // no damping level lowers the cost: treat as converged if any
            // earlier step succeeded, otherwise fall back
            converged = any_step;
            break;
        }
    }

    let (ox, oy) = (candidate.window_origin.0 as f64, candidate.window_origin.1 as f64);
    if converged && p[1].is_finite() && p[2].is_finite() {
        Ok(FlashFit {
            x: ox + p[1],
            y: oy + p[2],
            sigma: p[3],
            amplitude: p[0],
            offset: p[4],
            converged: true,
        })
    } else {
        Ok(FlashFit {
            x: ox + cx,
            y: oy + cy,
            sigma: s0,
            amplitude: mass,
            offset: min.max(0.0),
            converged: false,
        })
    }
}

/// One recovered flash: where it was found and the fit that localized it.
#[derive(Debug, Clone, Copy)]
pub struct DetectedFlash {
    pub frame_index: usize,
    pub event: PhotonEvent,
    pub fit: FlashFit,
}

/// Detect and fit every flash in a frame stack, returning sub-pixel events.
pub fn detect_stack(
    stack: &FrameStack,
    threshold: f64,
    window_radius: usize,
) -> Vec<DetectedFlash> {
    let mut out = Vec::new();
    for (fi, frame) in stack.frames.iter().enumerate() {
        for mut cand in find_flashes(frame, threshold, window_radius) {
            cand.frame_index = fi;
            if let Ok(fit) = fit_centroid(&cand) {
                out.push(DetectedFlash {
                    frame_index: fi,
                    event: PhotonEvent { x: fit.x, y: fit.y, kind: EventKind::Signal },
                    fit,
                });
            }
        }
    }
    out
}
