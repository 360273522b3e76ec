//! Conic Benchmark Format (CBF v3) export, for cross-checking against other solvers.

use std::fmt::Write as _;

use super::ir::{Cone, ConicProgram, LinExpr};

fn merged(e: &LinExpr) -> Vec<(usize, f64)> {
    let mut t = e.terms.clone();
    t.sort_by_key(|p| p.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(t.len());
    for (j, c) in t {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += c,
            _ => out.push((j, c)),
        }
    }
    out.retain(|p| p.1 != 0.0);
    out
}

/// Renders `cp` as CBF text. All variables are free; every constraint is an
/// affine image in its cone. A quadratic objective is written in epigraph form.
pub fn to_cbf(cp: &ConicProgram) -> crate::Result<String> {
    let cp = &cp.epigraph_form()?;
    let mut s = String::new();
    let _ = writeln!(s, "VER\n3\n\nOBJSENSE\nMIN\n");
    let _ = writeln!(s, "VAR\n{} 1\nF {}\n", cp.num_vars(), cp.num_vars());

    let mut blocks: Vec<(&'static str, usize)> = Vec::new();
    let mut scalar_rows: Vec<&LinExpr> = Vec::new();
    if !cp.equalities.is_empty() {
        blocks.push(("L=", cp.equalities.len()));
        scalar_rows.extend(cp.equalities.iter());
    }
    let mut psd = Vec::new();
    for c in &cp.cones {
        match c.cone {
            Cone::Nonneg(d) => blocks.push(("L+", d)),
            Cone::SecondOrder(d) => blocks.push(("Q", d)),
            Cone::RotatedSecondOrder(d) => blocks.push(("QR", d)),
            Cone::Psd(_) => {
                psd.push(c);
                continue;
            }
        }
        scalar_rows.extend(c.rows.iter());
    }

    if !blocks.is_empty() {
        let _ = writeln!(s, "CON\n{} {}", scalar_rows.len(), blocks.len());
        for (tag, d) in &blocks {
            let _ = writeln!(s, "{tag} {d}");
        }
        s.push('\n');
    }
    if !psd.is_empty() {
        let _ = writeln!(s, "PSDCON\n{}", psd.len());
        for c in &psd {
            if let Cone::Psd(d) = c.cone {
                let _ = writeln!(s, "{d}");
            }
        }
        s.push('\n');
    }

    let obj = merged(&cp.objective);
    if !obj.is_empty() {
        let _ = writeln!(s, "OBJACOORD\n{}", obj.len());
        for (j, v) in &obj {
            let _ = writeln!(s, "{j} {v:e}");
        }
        s.push('\n');
    }
    if cp.objective.constant != 0.0 {
        let _ = writeln!(s, "OBJBCOORD\n{:e}\n", cp.objective.constant);
    }

    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, e) in scalar_rows.iter().enumerate() {
        for (j, v) in merged(e) {
            a.push(format!("{i} {j} {v:e}"));
        }
        if e.constant != 0.0 {
            b.push(format!("{i} {:e}", e.constant));
        }
    }
    for (name, lines) in [("ACOORD", &a), ("BCOORD", &b)] {
        if !lines.is_empty() {
            let _ = writeln!(s, "{name}\n{}", lines.len());
            for l in lines {
                let _ = writeln!(s, "{l}");
            }
            s.push('\n');
        }
    }

    let mut h = Vec::new();
    let mut d_lines = Vec::new();
    for (p, c) in psd.iter().enumerate() {
        let Cone::Psd(d) = c.cone else { continue };
        let mut k = 0;
        for col in 0..d {
            for row in col..d {
                let e = &c.rows[k];
                for (j, v) in merged(e) {
                    h.push(format!("{p} {j} {row} {col} {v:e}"));
                }
                if e.constant != 0.0 {
                    d_lines.push(format!("{p} {row} {col} {:e}", e.constant));
                }
                k += 1;
            }
        }
    }
    for (name, lines) in [("HCOORD", &h), ("DCOORD", &d_lines)] {
        if !lines.is_empty() {
            let _ = writeln!(s, "{name}\n{}", lines.len());
            for l in lines {
                let _ = writeln!(s, "{l}");
            }
            s.push('\n');
        }
    }
    Ok(s)
}
