//! Nested-loop DC-gain reference for an empty box, written without any of
//! the crate's geometry or tracing code.

use std::f64::consts::PI;

type P = [f64; 3];

fn sub(a: P, b: P) -> P {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: P, b: P) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub struct El {
    c: P,
    n: P,
    area: f64,
}

/// Cell centres of the six faces of an `l × w × h` box, normals inward.
pub fn faces(l: f64, w: f64, h: f64, side: f64) -> Vec<El> {
    let cells = |len: f64| ((len / side) - 1e-9).ceil().max(1.0) as usize;
    let mut out = Vec::new();
    // (fixed axis, fixed value, inward normal sign)
    for (axis, at, sign) in [(2, 0.0, 1.0), (2, h, -1.0), (1, 0.0, 1.0), (1, w, -1.0), (0, 0.0, 1.0), (0, l, -1.0)] {
        let dims = [l, w, h];
        let (u, v) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let (nu, nv) = (cells(dims[u]), cells(dims[v]));
        let (du, dv) = (dims[u] / nu as f64, dims[v] / nv as f64);
        for i in 0..nu {
            for j in 0..nv {
                let mut c = [0.0; 3];
                c[axis] = at;
                c[u] = (i as f64 + 0.5) * du;
                c[v] = (j as f64 + 0.5) * dv;
                let mut n = [0.0; 3];
                n[axis] = sign;
                out.push(El { c, n, area: du * dv });
            }
        }
    }
    out
}

/// Point-to-area gain with a cosⁿ emitter; `cos_fov` bounds the receiving
/// cone (-1 for a full hemisphere).
fn hop(src: P, sn: P, n: f64, dst: P, dn: P, area: f64, cos_fov: f64) -> f64 {
    let d = sub(dst, src);
    let r2 = dot(d, d);
    if r2 == 0.0 {
        return 0.0;
    }
    let r = r2.sqrt();
    let ce = dot(sn, d) / r;
    let ci = -dot(dn, d) / r;
    if ce <= 0.0 || ci <= 0.0 || ci < cos_fov {
        return 0.0;
    }
    (n + 1.0) / (2.0 * PI) * ce.powf(n) * ci * area / r2
}

/// `[LOS, first order, second order]` DC gains in an empty box.
#[allow(clippy::too_many_arguments)]
pub fn reference(
    src: P,
    n: f64,
    det: P,
    dn: P,
    det_area: f64,
    fov_deg: f64,
    rho: f64,
    els: &[El],
) -> [f64; 3] {
    let down = [0.0, 0.0, -1.0];
    let cf = fov_deg.to_radians().cos();
    let los = hop(src, down, n, det, dn, det_area, cf);
    let mut first = 0.0;
    let mut second = 0.0;
    for a in els {
        let ga = rho * hop(src, down, n, a.c, a.n, a.area, -1.0);
        if ga == 0.0 {
            continue;
        }
        first += ga * hop(a.c, a.n, 1.0, det, dn, det_area, cf);
        for b in els {
            let gb = rho * hop(a.c, a.n, 1.0, b.c, b.n, b.area, -1.0);
            second += ga * gb * hop(b.c, b.n, 1.0, det, dn, det_area, cf);
        }
    }
    [los, first, second]
}
