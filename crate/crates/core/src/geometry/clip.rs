//! Convex polygon / half-plane clipping (Sutherland-Hodgman step).

/// Clips a convex polygon (counterclockwise vertex list) against the
/// half-plane a.x <= b. Points within eps of the boundary are kept, so
/// degenerate (edge-touching) results survive.
pub fn clip_polygon(poly: &[[f64; 2]], a: [f64; 2], b: f64, eps: f64) -> Vec<[f64; 2]> {
    if poly.is_empty() {
        return Vec::new();
    }
    let scale = (a[0] * a[0] + a[1] * a[1]).sqrt().max(1e-300);
    let side = |p: [f64; 2]| (a[0] * p[0] + a[1] * p[1] - b) / scale;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let cur = poly[i];
        let nxt = poly[(i + 1) % poly.len()];
        let sc = side(cur);
        let sn = side(nxt);
        if sc <= eps {
            out.push(cur);
        }
        if (sc > eps && sn < -eps) || (sc < -eps && sn > eps) {
            let t = sc / (sc - sn);
            out.push([
                cur[0] + t * (nxt[0] - cur[0]),
                cur[1] + t * (nxt[1] - cur[1]),
            ]);
        }
    }
    out
}
