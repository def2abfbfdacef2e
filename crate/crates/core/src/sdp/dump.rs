use std::fmt::Write;

use super::{Entry, SdpProblem};

fn write_entries(out: &mut String, entries: &[Entry]) {
    for e in entries {
        let _ = write!(out, " {},{},{},{}", e.block, e.i, e.j, e.coef);
    }
}

/// Plain-text rendering of a problem for debugging. Identical problems
/// produce byte-identical output.
pub fn dump_problem(p: &SdpProblem) -> String {
    let mut out = String::from("sdp 1\nblocks");
    for b in &p.blocks {
        let _ = write!(out, " {b}");
    }
    let _ = writeln!(out, "\nrows {}", p.rows.len());
    for (k, r) in p.rows.iter().enumerate() {
        let _ = write!(out, "row {k} rhs {} :", r.rhs);
        write_entries(&mut out, &r.entries);
        out.push('\n');
    }
    if let Some(obj) = &p.objective {
        out.push_str("objective :");
        write_entries(&mut out, obj);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_format() {
        let mut p = SdpProblem::new();
        p.add_block(2);
        p.add_row(
            vec![Entry {
                block: 0,
                i: 0,
                j: 1,
                coef: 0.5,
            }],
            1e-6,
        );
        assert_eq!(dump_problem(&p), "sdp 1\nblocks 2\nrows 1\nrow 0 rhs 0.000001 : 0,0,1,0.5\n");
    }
}
