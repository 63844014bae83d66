//! Sparse SDPA text format (`.dat-s`).
//!
//! The objective matrix is written as `F0 = -C` so that a standard SDPA
//! solver minimizing `sum c_i x_i` with `F(x) = sum F_i x_i - F0` sees the
//! same problem (with `x = -y`). The LP block is a negative block size.
//! Two optional comment lines carry the sense and the objective offset.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use super::{build_problem, Blocks, Constraint, MixedProblem, Objective, Sense};
use crate::error::{Error, Result};
use crate::symmat::SymMatrix;

fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn sdpa_to_string(p: &MixedProblem) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "* sense {}", p.sense().as_str());
    let _ = writeln!(s, "* offset {}", num(p.offset()));
    let _ = writeln!(s, "{}", p.m());
    let nblocks = if p.n_lin() > 0 { 2 } else { 1 };
    let _ = writeln!(s, "{nblocks}");
    if p.n_lin() > 0 {
        let _ = writeln!(s, "{} -{}", p.n(), p.n_lin());
    } else {
        let _ = writeln!(s, "{}", p.n());
    }
    let b: Vec<String> = p.b().iter().map(|v| num(*v)).collect();
    let _ = writeln!(s, "{}", b.join(" "));
    let c = p.c_sdp();
    for j in 0..p.n() {
        for i in 0..=j {
            let v = c.get(i, j);
            if v != 0.0 {
                let _ = writeln!(s, "0 1 {} {} {}", i + 1, j + 1, num(-v));
            }
        }
    }
    for (k, v) in p.c_lin().iter().enumerate() {
        if *v != 0.0 {
            let _ = writeln!(s, "0 2 {} {} {}", k + 1, k + 1, num(-v));
        }
    }
    for (i, a) in p.a_sdp().iter().enumerate() {
        for &(r, c, v) in a.entries() {
            let _ = writeln!(s, "{} 1 {} {} {}", i + 1, r + 1, c + 1, num(v));
        }
        for (k, v) in p.a_lin_row(i).iter().enumerate() {
            if *v != 0.0 {
                let _ = writeln!(s, "{} 2 {} {} {}", i + 1, k + 1, k + 1, num(*v));
            }
        }
    }
    s
}

pub fn sdpa_write(p: &MixedProblem, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, sdpa_to_string(p))?;
    Ok(())
}

pub fn sdpa_read(path: impl AsRef<Path>) -> Result<MixedProblem> {
    sdpa_read_str(&std::fs::read_to_string(path)?)
}

fn tokens(line: &str) -> Vec<&str> {
    line.split(|c: char| c.is_whitespace() || matches!(c, ',' | '{' | '}' | '(' | ')'))
        .filter(|t| !t.is_empty())
        .collect()
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub fn sdpa_read_str(text: &str) -> Result<MixedProblem> {
    let mut sense = Sense::MinimizePrimal;
    let mut offset = 0.0;
    let mut header: Vec<(usize, Vec<&str>)> = Vec::new();
    let mut body_start = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        if t.starts_with('*') || t.starts_with('"') {
            let words: Vec<&str> = t.trim_start_matches(['*', '"']).split_whitespace().collect();
            match words.as_slice() {
                ["sense", "maximize-dual"] => sense = Sense::MaximizeDual,
                ["sense", "minimize-primal"] => sense = Sense::MinimizePrimal,
                ["offset", v] => {
                    offset = v.parse().map_err(|_| parse_err(line, "bad offset"))?;
                }
                _ => {}
            }
            continue;
        }
        if header.len() < 4 {
            header.push((line, tokens(t)));
        } else {
            body_start = Some(idx);
            break;
        }
    }
    if header.len() < 4 {
        return Err(parse_err(text.lines().count(), "truncated header"));
    }
    let int = |line: usize, s: &str| -> Result<i64> {
        s.parse::<i64>().map_err(|_| parse_err(line, format!("expected integer, got `{s}`")))
    };
    let real = |line: usize, s: &str| -> Result<f64> {
        s.parse::<f64>().map_err(|_| parse_err(line, format!("expected number, got `{s}`")))
    };
    let (l0, t0) = &header[0];
    let m = int(*l0, t0.first().ok_or_else(|| parse_err(*l0, "missing m"))?)?;
    let (l1, t1) = &header[1];
    let nblocks = int(*l1, t1.first().ok_or_else(|| parse_err(*l1, "missing block count"))?)?;
    if m < 0 || !(1..=2).contains(&nblocks) {
        return Err(parse_err(*l1, "expected one SDP block and at most one LP block"));
    }
    let (l2, t2) = &header[2];
    if t2.len() != nblocks as usize {
        return Err(parse_err(*l2, "block size count does not match"));
    }
    let sizes: Vec<i64> = t2.iter().map(|s| int(*l2, s)).collect::<Result<_>>()?;
    let mut n = 0usize;
    let mut n_lin = 0usize;
    let mut kinds = Vec::new();
    for &s in &sizes {
        if s > 0 && n == 0 {
            n = s as usize;
            kinds.push(true);
        } else if s < 0 && n_lin == 0 {
            n_lin = (-s) as usize;
            kinds.push(false);
        } else {
            return Err(parse_err(*l2, "unsupported block structure"));
        }
    }
    if n == 0 {
        return Err(parse_err(*l2, "missing SDP block"));
    }
    let m = m as usize;
    let (l3, t3) = &header[3];
    if t3.len() != m {
        return Err(parse_err(*l3, format!("expected {m} entries in b")));
    }
    let b: Vec<f64> = t3.iter().map(|s| real(*l3, s)).collect::<Result<_>>()?;

    let mut c = DMatrix::zeros(n, n);
    let mut c_lin = vec![0.0; n_lin];
    let mut cons: Vec<Constraint> = b.iter().map(|&rhs| Constraint { rhs, ..Default::default() }).collect();
    if let Some(start) = body_start {
        for (idx, raw) in text.lines().enumerate().skip(start) {
            let line = idx + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('*') || t.starts_with('"') {
                continue;
            }
            let f = tokens(t);
            if f.len() != 5 {
                return Err(parse_err(line, "expected `matno blockno i j value`"));
            }
            let mat = int(line, f[0])?;
            let blk = int(line, f[1])?;
            let i = int(line, f[2])?;
            let j = int(line, f[3])?;
            let v = real(line, f[4])?;
            if mat < 0 || mat as usize > m {
                return Err(parse_err(line, "matrix number out of range"));
            }
            if blk < 1 || blk as usize > kinds.len() {
                return Err(parse_err(line, "block number out of range"));
            }
            if i > j {
                return Err(Error::Format { line, msg: format!("entry ({i}, {j}) below the diagonal") });
            }
            let sdp = kinds[blk as usize - 1];
            let size = if sdp { n } else { n_lin } as i64;
            if i < 1 || j > size {
                return Err(parse_err(line, "index out of range"));
            }
            let (i, j) = (i as usize - 1, j as usize - 1);
            if !sdp && i != j {
                return Err(Error::Format { line, msg: "off-diagonal entry in LP block".into() });
            }
            match (mat, sdp) {
                (0, true) => {
                    c[(i, j)] = -v;
                    c[(j, i)] = -v;
                }
                (0, false) => c_lin[i] = -v,
                (k, true) => cons[k as usize - 1].sdp.push((i, j, v)),
                (k, false) => cons[k as usize - 1].lin.push((i, v)),
            }
        }
    }
    build_problem(
        Blocks { n_lin, n },
        cons,
        Objective { c_sdp: SymMatrix::symmetrized(c), c_lin, sense, offset },
    )
}
