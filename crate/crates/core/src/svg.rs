//! Minimal SVG emission: enough shapes for the phase-plane figures without
//! pulling in a plotting stack. World coordinates go in, the y axis is
//! flipped, and everything is written with fixed precision so identical runs
//! produce identical bytes.

use std::fmt::Write as _;

pub struct SvgCanvas {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    width_px: f64,
    height_px: f64,
    body: String,
}

fn fmt_px(v: f64) -> String {
    format!("{v:.3}")
}

impl SvgCanvas {
    /// World viewport [x0, x1] x [y0, y1] mapped to `width_px` pixels wide,
    /// height chosen to preserve aspect ratio.
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64, width_px: f64) -> Self {
        assert!(x1 > x0 && y1 > y0 && width_px > 0.0);
        let height_px = width_px * (y1 - y0) / (x1 - x0);
        SvgCanvas {
            x0,
            y0,
            x1,
            y1,
            width_px,
            height_px,
            body: String::new(),
        }
    }

    pub fn tx(&self, x: f64) -> f64 {
        (x - self.x0) / (self.x1 - self.x0) * self.width_px
    }

    pub fn ty(&self, y: f64) -> f64 {
        (self.y1 - y) / (self.y1 - self.y0) * self.height_px
    }

    fn points_attr(&self, pts: &[[f64; 2]]) -> String {
        let mut s = String::new();
        for p in pts {
            let _ = write!(s, "{},{} ", fmt_px(self.tx(p[0])), fmt_px(self.ty(p[1])));
        }
        s.pop();
        s
    }

    pub fn polygon(&mut self, pts: &[[f64; 2]], fill: &str, stroke: &str, stroke_width: f64) {
        let _ = writeln!(
            self.body,
            r#"<polygon points="{}" fill="{fill}" stroke="{stroke}" stroke-width="{}"/>"#,
            self.points_attr(pts),
            fmt_px(stroke_width),
        );
    }

    pub fn polyline(&mut self, pts: &[[f64; 2]], stroke: &str, stroke_width: f64) {
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{}"/>"#,
            self.points_attr(pts),
            fmt_px(stroke_width),
        );
    }

    pub fn circle(&mut self, c: [f64; 2], world_r: f64, fill: &str, stroke: &str) {
        let r = world_r / (self.x1 - self.x0) * self.width_px;
        let _ = writeln!(
            self.body,
            r#"<circle cx="{}" cy="{}" r="{}" fill="{fill}" stroke="{stroke}"/>"#,
            fmt_px(self.tx(c[0])),
            fmt_px(self.ty(c[1])),
            fmt_px(r),
        );
    }

    pub fn text(&mut self, at: [f64; 2], size_px: f64, content: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" font-size="{}" font-family="sans-serif">{}</text>"#,
            fmt_px(self.tx(at[0])),
            fmt_px(self.ty(at[1])),
            fmt_px(size_px),
            escape(content),
        );
    }

    pub fn finish(self) -> String {
        format!(
            concat!(
                r#"<?xml version="1.0" encoding="UTF-8"?>"#,
                "\n",
                r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
                "\n",
                "<defs>\n",
                r#"<pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse" patternTransform="rotate(45)">"#,
                "\n",
                r##"<line x1="0" y1="0" x2="0" y2="6" stroke="#555" stroke-width="1.5"/>"##,
                "\n</pattern>\n</defs>\n{body}</svg>\n"
            ),
            w = fmt_px(self.width_px),
            h = fmt_px(self.height_px),
            body = self.body,
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinates_flip_and_scale() {
        let c = SvgCanvas::new(-1.0, -2.0, 3.0, 2.0, 400.0);
        assert_eq!(c.tx(-1.0), 0.0);
        assert_eq!(c.tx(3.0), 400.0);
        // y grows downward in svg space
        assert_eq!(c.ty(2.0), 0.0);
        assert_eq!(c.ty(-2.0), 400.0);
    }

    #[test]
    fn document_is_balanced_and_deterministic() {
        let render = || {
            let mut c = SvgCanvas::new(0.0, 0.0, 1.0, 1.0, 100.0);
            c.polygon(&[[0.0, 0.0], [1.0, 0.0], [0.5, 1.0]], "url(#hatch)", "black", 0.5);
            c.polyline(&[[0.0, 0.0], [1.0, 1.0]], "red", 1.0);
            c.circle([0.5, 0.5], 0.1, "none", "blue");
            c.text([0.1, 0.9], 10.0, "a < b & c");
            c.finish()
        };
        let doc = render();
        assert_eq!(doc, render());
        assert!(doc.starts_with("<?xml"));
        assert!(doc.trim_end().ends_with("</svg>"));
        assert_eq!(doc.matches("<polygon").count(), 1);
        assert!(doc.contains("a &lt; b &amp; c"));
        assert!(doc.contains(r##"url(#hatch)"##));
    }
}
