use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::ensemble::{EnsembleModel, KernelSpec, SvmModel, WeakHypothesis};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MAVSVM01";
const MANIFEST: &str = "models.txt";

pub fn write_ensemble<W: Write>(ens: &EnsembleModel, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    write_str(&mut out, &ens.target)?;
    let kernel = ens.hypotheses.first().map(|h| h.model.kernel).unwrap_or_default();
    write_kernel(&mut out, &kernel)?;
    write_u32(&mut out, ens.batches)?;
    write_u32(&mut out, ens.distribution.len())?;
    for &v in &ens.distribution {
        out.write_all(&v.to_le_bytes())?;
    }
    write_u32(&mut out, ens.hypotheses.len())?;
    for h in &ens.hypotheses {
        if h.model.kernel != kernel {
            return Err(Error::InvalidData("hypotheses of one ensemble must share a kernel".into()));
        }
        write_u32(&mut out, h.batch)?;
        write_u32(&mut out, h.iteration)?;
        for v in [h.beta, h.model.b, h.model.c] {
            out.write_all(&v.to_le_bytes())?;
        }
        let m = &h.model;
        write_u32(&mut out, m.support.len())?;
        write_u32(&mut out, m.dim())?;
        for ((sv, &y), &a) in m.support.iter().zip(&m.labels).zip(&m.alphas) {
            out.write_all(&[y as u8])?;
            out.write_all(&a.to_le_bytes())?;
            for v in sv {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_ensemble<R: Read>(mut r: R) -> Result<EnsembleModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not an ensemble model file".into()));
    }
    let target = read_str(&mut r)?;
    let kernel = read_kernel(&mut r)?;
    let batches = read_u32(&mut r)?;
    let nd = read_u32(&mut r)?;
    let distribution = (0..nd).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
    let nh = read_u32(&mut r)?;
    let mut hypotheses = Vec::with_capacity(nh.min(4096));
    for _ in 0..nh {
        let batch = read_u32(&mut r)?;
        let iteration = read_u32(&mut r)?;
        let beta = read_f64(&mut r)?;
        let b = read_f64(&mut r)?;
        let c = read_f64(&mut r)?;
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::Parse(format!("hypothesis weight β = {beta} outside (0, 1)")));
        }
        let nsv = read_u32(&mut r)?;
        let dim = read_u32(&mut r)?;
        let mut support = Vec::with_capacity(nsv.min(1 << 16));
        let mut labels = Vec::with_capacity(nsv.min(1 << 16));
        let mut alphas = Vec::with_capacity(nsv.min(1 << 16));
        for _ in 0..nsv {
            let mut y = [0u8; 1];
            r.read_exact(&mut y)?;
            let y = y[0] as i8;
            if y != 1 && y != -1 {
                return Err(Error::Parse(format!("bad support vector label {y}")));
            }
            labels.push(y);
            alphas.push(read_f64(&mut r)?);
            support.push((0..dim).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?);
        }
        hypotheses.push(WeakHypothesis {
            model: SvmModel {
                kernel,
                support,
                labels,
                alphas,
                b,
                c,
            },
            beta,
            batch,
            iteration,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Parse("trailing bytes after ensemble model".into()));
    }
    Ok(EnsembleModel {
        target,
        hypotheses,
        distribution,
        batches,
    })
}

fn model_file(target: &str) -> String {
    format!("{target}.svm")
}

/// Writes one model file per ensemble plus a manifest naming their targets.
pub fn save_models(dir: &Path, models: &[EnsembleModel]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    for m in models {
        if m.target.is_empty() || m.target.contains(['/', '\\', '\n']) {
            return Err(Error::InvalidData(format!("unusable target name `{}`", m.target)));
        }
        let f = BufWriter::new(fs::File::create(dir.join(model_file(&m.target)))?);
        write_ensemble(m, f)?;
        manifest.push_str(&m.target);
        manifest.push('\n');
    }
    fs::write(dir.join(MANIFEST), manifest)?;
    Ok(())
}

/// Loads the models named in the manifest, in manifest order.
pub fn load_models(dir: &Path) -> Result<Vec<EnsembleModel>> {
    let manifest = fs::read_to_string(dir.join(MANIFEST))?;
    let mut out = Vec::new();
    for target in manifest.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let f = BufReader::new(fs::File::open(dir.join(model_file(target)))?);
        let m = read_ensemble(f)?;
        if m.target != target {
            return Err(Error::Parse(format!("model file for `{target}` holds `{}`", m.target)));
        }
        out.push(m);
    }
    Ok(out)
}

fn write_kernel<W: Write>(out: &mut W, k: &KernelSpec) -> Result<()> {
    let (code, degree, param) = match *k {
        KernelSpec::Linear => (0u8, 0, 0.0),
        KernelSpec::Rbf { gamma } => (1, 0, gamma),
        KernelSpec::Polynomial { degree, coef } => (2, degree, coef),
    };
    out.write_all(&[code])?;
    out.write_all(&degree.to_le_bytes())?;
    out.write_all(&param.to_le_bytes())?;
    Ok(())
}

fn read_kernel<R: Read>(r: &mut R) -> Result<KernelSpec> {
    let mut code = [0u8; 1];
    r.read_exact(&mut code)?;
    let degree = read_u32(r)? as u32;
    let param = read_f64(r)?;
    let k = match code[0] {
        0 => KernelSpec::Linear,
        1 => KernelSpec::Rbf { gamma: param },
        2 => KernelSpec::Polynomial { degree, coef: param },
        c => return Err(Error::Parse(format!("unknown kernel code {c}"))),
    };
    k.validate().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(k)
}

fn write_u32<W: Write>(out: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::InvalidData(format!("{v} does not fit the model format")))?;
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn write_str<W: Write>(out: &mut W, s: &str) -> Result<()> {
    write_u32(out, s.len())?;
    out.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let n = read_u32(r)?;
    if n > 4096 {
        return Err(Error::Parse("target name too long".into()));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| Error::Parse("target name is not UTF-8".into()))
}
