//! Plain-text problem dumps for cross-checking against external solvers.
//!
//! Format: a header line `SDP <dim> <num_constraints>` (or
//! `QCQP <dim> <num_constraints>`), scalar lines `key value`, then each
//! matrix as a `name` line followed by its rows, row-major, entries separated
//! by spaces. Complex entries are written `re im`. Every number uses 17
//! significant digits.

use std::io::{self, Write};

use super::{CMatrix, QcqpProblem, SdpProblem};

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_cmatrix<W: Write>(w: &mut W, name: &str, m: &CMatrix) -> io::Result<()> {
    writeln!(w, "{name}")?;
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|c| format!("{} {}", num(m[(r, c)].re), num(m[(r, c)].im)))
            .collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

pub fn write_sdp<W: Write>(w: &mut W, p: &SdpProblem) -> io::Result<()> {
    writeln!(w, "SDP {} {}", p.dim(), p.gain_constraints().len())?;
    writeln!(w, "t_coeff {}", num(p.t_coeff()))?;
    writeln!(w, "diag_value {}", num(p.diag_value()))?;
    write_cmatrix(w, "C", p.objective())?;
    for (l, r) in p.gain_constraints().iter().enumerate() {
        write_cmatrix(w, &format!("R {l}"), r)?;
    }
    Ok(())
}

pub fn write_qcqp<W: Write>(w: &mut W, p: &QcqpProblem) -> io::Result<()> {
    writeln!(w, "QCQP {} {}", p.dim(), p.constraints().len())?;
    writeln!(w, "upper {}", num(p.upper()))?;
    writeln!(w, "min_spacing {}", num(p.min_spacing()))?;
    for (l, q) in p.constraints().iter().enumerate() {
        writeln!(w, "A {l}")?;
        for r in 0..q.a.nrows() {
            let row: Vec<String> = q.a.row(r).iter().map(|&v| num(v)).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        writeln!(w, "b {l}")?;
        let b: Vec<String> = q.b.iter().map(|&v| num(v)).collect();
        writeln!(w, "{}", b.join(" "))?;
        writeln!(w, "c {l} {}", num(q.c))?;
    }
    Ok(())
}
