//! Plain-text file formats.
//!
//! Floats are written with 17 significant digits so every value round-trips.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use tensor_fen::grid::TensorShape;
use nalgebra::DMatrix;
use tensor_fen::selection::{Cutoff, FitResult};
use tensor_fen::simgen::{CoefficientFields, ShapeMask, SimSetting};
use tensor_fen::spline::SplineBasis;

use crate::CliError;

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn join(vals: impl IntoIterator<Item = f64>) -> String {
    vals.into_iter().map(fmt).collect::<Vec<_>>().join(" ")
}

pub fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn parse_f64(tok: &str, what: &str) -> Result<f64, CliError> {
    tok.parse().map_err(|_| CliError::Config(format!("{what}: cannot parse {tok:?}")))
}

fn parse_usize(tok: &str, what: &str) -> Result<usize, CliError> {
    tok.parse().map_err(|_| CliError::Config(format!("{what}: cannot parse {tok:?}")))
}

/// Parse a shape such as `15x15` or `3x4x2`.
pub fn parse_shape(text: &str) -> Result<TensorShape, CliError> {
    let dims = text
        .split(['x', 'X', ','])
        .map(|d| parse_usize(d.trim(), "shape"))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TensorShape::new(dims)?)
}

/// Row-major position of every column-major offset.
fn row_major_order(shape: &TensorShape) -> Vec<usize> {
    let dims = shape.dims();
    (0..shape.size())
        .map(|r| {
            // Decode r with the last index fastest, then vectorize column-major.
            let mut rem = r;
            let mut idx = vec![0; dims.len()];
            for d in (0..dims.len()).rev() {
                idx[d] = rem % dims[d];
                rem /= dims[d];
            }
            shape.offset(&idx).expect("index in range")
        })
        .collect()
}

/// Tensor file: header `N P1 ... PD`, then one line per sample with the
/// tensor in row-major order (last index fastest).
pub fn write_tensors(path: &Path, shape: &TensorShape, x: &[f64]) -> Result<(), CliError> {
    let p = shape.size();
    let n = x.len() / p;
    let mut out = String::new();
    let dims: Vec<String> = shape.dims().iter().map(|d| d.to_string()).collect();
    writeln!(out, "{n} {}", dims.join(" ")).unwrap();
    let order = row_major_order(shape);
    for row in x.chunks(p) {
        out.push_str(&join(order.iter().map(|&t| row[t])));
        out.push('\n');
    }
    write_file(path, &out)
}

/// Read a tensor file into column-major vectorized rows.
pub fn read_tensors(path: &Path) -> Result<(TensorShape, Vec<f64>), CliError> {
    let text = read_file(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| CliError::Config(format!("{}: empty tensor file", path.display())))?;
    let mut head = header.split_whitespace().map(|t| parse_usize(t, "tensor header"));
    let n = head.next().ok_or_else(|| CliError::Config("tensor header is empty".into()))??;
    let dims = head.collect::<Result<Vec<_>, _>>()?;
    let shape = TensorShape::new(dims)?;
    let p = shape.size();
    let order = row_major_order(&shape);
    let mut x = vec![0.0; n * p];
    let mut count = 0;
    for (i, line) in lines.enumerate() {
        if i >= n {
            return Err(CliError::Config(format!("{}: more than {n} samples", path.display())));
        }
        let vals = line.split_whitespace().map(|t| parse_f64(t, "tensor value")).collect::<Result<Vec<_>, _>>()?;
        if vals.len() != p {
            return Err(CliError::Config(format!("{}: sample {} has {} values, expected {p}", path.display(), i + 1, vals.len())));
        }
        for (r, &t) in order.iter().enumerate() {
            x[i * p + t] = vals[r];
        }
        count += 1;
    }
    if count != n {
        return Err(CliError::Config(format!("{}: header says {n} samples, found {count}", path.display())));
    }
    Ok((shape, x))
}

pub fn write_vector(path: &Path, v: &[f64]) -> Result<(), CliError> {
    let mut out = String::new();
    for &x in v {
        out.push_str(&fmt(x));
        out.push('\n');
    }
    write_file(path, &out)
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>, CliError> {
    read_file(path)?
        .split_whitespace()
        .map(|t| parse_f64(t, "response"))
        .collect()
}

/// Values indexed by column-major offset as a `P1 x (P2 ... PD)` matrix.
pub fn matrix_text(shape: &TensorShape, vals: &[f64]) -> String {
    let rows = shape.dims()[0];
    let cols = shape.size() / rows;
    let mut out = String::new();
    for i in 0..rows {
        out.push_str(&join((0..cols).map(|j| vals[i + j * rows])));
        out.push('\n');
    }
    out
}

/// 1-based multi-index label such as `3,4`.
pub fn entry_label(shape: &TensorShape, t: usize) -> String {
    shape.multi_index(t).iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",")
}

/// Truth manifest of a simulated dataset.
#[derive(Debug, Clone)]
pub struct Truth {
    pub shape: TensorShape,
    pub fields: CoefficientFields,
}

pub fn write_truth(path: &Path, setting: &SimSetting, noise_var: f64) -> Result<(), CliError> {
    let f = &setting.fields;
    let dims: Vec<String> = setting.shape.dims().iter().map(|d| d.to_string()).collect();
    let mut out = String::new();
    writeln!(out, "setting {}", setting.id).unwrap();
    writeln!(out, "shape {}", dims.join(" ")).unwrap();
    writeln!(out, "snr {}", fmt(setting.snr)).unwrap();
    writeln!(out, "noise_var {}", fmt(noise_var)).unwrap();
    writeln!(out, "entries t active a b c d m").unwrap();
    for t in 0..f.len() {
        writeln!(out, "{t} {} {}", f.active[t] as u8, join([f.a[t], f.b[t], f.c[t], f.d[t], f.m[t]])).unwrap();
    }
    out.push_str("mask\n");
    out.push_str(&setting.mask.to_text());
    write_file(path, &out)
}

pub fn read_truth(path: &Path) -> Result<Truth, CliError> {
    let text = read_file(path)?;
    let mut shape = None;
    let mut fields: Option<CoefficientFields> = None;
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("shape") => {
                let dims = toks.map(|t| parse_usize(t, "truth shape")).collect::<Result<Vec<_>, _>>()?;
                shape = Some(TensorShape::new(dims)?);
            }
            Some("entries") => {
                let s: &TensorShape = shape.as_ref().ok_or_else(|| CliError::Config("truth: shape must precede entries".into()))?;
                let mut f = CoefficientFields::zeros(s.size());
                for t in 0..s.size() {
                    let row = lines.next().ok_or_else(|| CliError::Config("truth: missing entries".into()))?;
                    let v: Vec<&str> = row.split_whitespace().collect();
                    if v.len() != 7 || parse_usize(v[0], "truth entry")? != t {
                        return Err(CliError::Config(format!("truth: bad entry line {row:?}")));
                    }
                    f.active[t] = v[1] == "1";
                    f.a[t] = parse_f64(v[2], "a")?;
                    f.b[t] = parse_f64(v[3], "b")?;
                    f.c[t] = parse_f64(v[4], "c")?;
                    f.d[t] = parse_f64(v[5], "d")?;
                    f.m[t] = parse_f64(v[6], "m")?;
                }
                fields = Some(f);
            }
            Some("mask") => {
                let rest: Vec<&str> = lines.by_ref().collect();
                ShapeMask::parse(&rest.join("\n"))?;
            }
            _ => {}
        }
    }
    match (shape, fields) {
        (Some(shape), Some(fields)) => Ok(Truth { shape, fields }),
        _ => Err(CliError::Config(format!("{}: not a truth manifest", path.display()))),
    }
}

/// Extra values stored with a fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitMeta {
    pub eps0: f64,
    pub lambda_u: f64,
    pub p0: f64,
    pub r: f64,
    pub rho: f64,
}

fn matrix_lines(out: &mut String, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        out.push_str(&join(m.row(i).iter().copied()));
        out.push('\n');
    }
}

pub fn write_fit(path: &Path, fit: &FitResult, basis: &SplineBasis, meta: &FitMeta) -> Result<(), CliError> {
    let mut out = String::new();
    let dims: Vec<String> = fit.shape.dims().iter().map(|d| d.to_string()).collect();
    writeln!(out, "shape {}", dims.join(" ")).unwrap();
    writeln!(out, "k {}", fit.k).unwrap();
    writeln!(out, "delta_prime {}", fmt(basis.delta_prime())).unwrap();
    writeln!(out, "knots {}", join(basis.interior_knots().iter().copied())).unwrap();
    out.push_str("transform\n");
    matrix_lines(&mut out, basis.transform());
    out.push_str("roughness\n");
    matrix_lines(&mut out, basis.roughness());
    writeln!(out, "mu_hat {}", fmt(fit.mu_hat)).unwrap();
    writeln!(out, "y_mean {}", fmt(fit.y_mean)).unwrap();
    writeln!(out, "y_sd {}", fmt(fit.y_sd)).unwrap();
    writeln!(out, "eps0 {}", fmt(meta.eps0)).unwrap();
    writeln!(out, "lambda_u {}", fmt(meta.lambda_u)).unwrap();
    writeln!(out, "best {}", join([meta.p0, meta.r, meta.rho])).unwrap();
    let c = &fit.cutoff;
    writeln!(out, "cutoff {} {}", join([c.c0, c.tpr, c.tnr, c.distance]), c.degenerate as u8).unwrap();
    out.push_str("entries t inclusion active beta\n");
    for t in 0..fit.shape.size() {
        writeln!(out, "{t} {} {} {}", fmt(fit.inclusion[t]), fit.active[t] as u8, join(fit.beta(t).iter().copied())).unwrap();
    }
    write_file(path, &out)
}

fn key_values<'a>(line: &'a str, key: &str) -> Result<Vec<&'a str>, CliError> {
    let mut toks = line.split_whitespace();
    if toks.next() != Some(key) {
        return Err(CliError::Config(format!("fit file: expected {key:?}, found {line:?}")));
    }
    Ok(toks.collect())
}

fn scalar(line: Option<&str>, key: &str) -> Result<f64, CliError> {
    let v = key_values(line.unwrap_or(""), key)?;
    match v.as_slice() {
        [x] => parse_f64(x, key),
        _ => Err(CliError::Config(format!("fit file: {key} needs one value"))),
    }
}

fn read_matrix<'a>(lines: &mut impl Iterator<Item = &'a str>, rows: usize, cols: usize) -> Result<DMatrix<f64>, CliError> {
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        let line = lines.next().ok_or_else(|| CliError::Config("fit file: truncated matrix".into()))?;
        let vals = line.split_whitespace().map(|t| parse_f64(t, "matrix")).collect::<Result<Vec<_>, _>>()?;
        if vals.len() != cols {
            return Err(CliError::Config("fit file: matrix row has the wrong length".into()));
        }
        for (j, v) in vals.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

pub fn read_fit(path: &Path) -> Result<(FitResult, SplineBasis, FitMeta), CliError> {
    let text = read_file(path)?;
    let mut lines = text.lines();
    let dims = key_values(lines.next().unwrap_or(""), "shape")?
        .iter()
        .map(|t| parse_usize(t, "shape"))
        .collect::<Result<Vec<_>, _>>()?;
    let shape = TensorShape::new(dims)?;
    let k = scalar(lines.next(), "k")? as usize;
    let delta_prime = scalar(lines.next(), "delta_prime")?;
    let knots = key_values(lines.next().unwrap_or(""), "knots")?
        .iter()
        .map(|t| parse_f64(t, "knot"))
        .collect::<Result<Vec<_>, _>>()?;
    key_values(lines.next().unwrap_or(""), "transform")?;
    let transform = read_matrix(&mut lines, k, k + 1)?;
    key_values(lines.next().unwrap_or(""), "roughness")?;
    let roughness = read_matrix(&mut lines, k, k)?;
    let basis = SplineBasis::from_parts(k, knots, transform, roughness, delta_prime)?;
    let mu_hat = scalar(lines.next(), "mu_hat")?;
    let y_mean = scalar(lines.next(), "y_mean")?;
    let y_sd = scalar(lines.next(), "y_sd")?;
    let eps0 = scalar(lines.next(), "eps0")?;
    let lambda_u = scalar(lines.next(), "lambda_u")?;
    let best = key_values(lines.next().unwrap_or(""), "best")?
        .iter()
        .map(|t| parse_f64(t, "best"))
        .collect::<Result<Vec<_>, _>>()?;
    let cut = key_values(lines.next().unwrap_or(""), "cutoff")?;
    if best.len() != 3 || cut.len() != 5 {
        return Err(CliError::Config("fit file: malformed best/cutoff line".into()));
    }
    let cutoff = Cutoff {
        c0: parse_f64(cut[0], "c0")?,
        tpr: parse_f64(cut[1], "tpr")?,
        tnr: parse_f64(cut[2], "tnr")?,
        distance: parse_f64(cut[3], "distance")?,
        degenerate: cut[4] == "1",
    };
    key_values(lines.next().unwrap_or(""), "entries")?;
    let p = shape.size();
    let mut inclusion = vec![0.0; p];
    let mut active = vec![false; p];
    let mut beta_hat = vec![0.0; p * k];
    for t in 0..p {
        let line = lines.next().ok_or_else(|| CliError::Config("fit file: missing entries".into()))?;
        let v: Vec<&str> = line.split_whitespace().collect();
        if v.len() != 3 + k || parse_usize(v[0], "entry")? != t {
            return Err(CliError::Config(format!("fit file: bad entry line {line:?}")));
        }
        inclusion[t] = parse_f64(v[1], "inclusion")?;
        active[t] = v[2] == "1";
        for j in 0..k {
            beta_hat[t * k + j] = parse_f64(v[3 + j], "beta")?;
        }
    }
    let fit = FitResult { shape, k, inclusion, cutoff, active, beta_hat, mu_hat, y_mean, y_sd };
    let meta = FitMeta { eps0, lambda_u, p0: best[0], r: best[1], rho: best[2] };
    Ok((fit, basis, meta))
}
