//! Checkpoint format: magic `VFCK`, u32 version, a length-prefixed UTF-8
//! header of `key=value` lines, then every parameter tensor as
//! (u32 rank, u32 dims..., f64 little-endian payload) in declared order.

use super::model::{AblationMask, ModelParams};
use super::tensor::Tensor;
use crate::config::{ProviderKind, RunConfig};
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"VFCK";
const VERSION: u32 = 1;

/// Hyperparameter keys recorded in (and validated against) the header.
pub const ARCH_KEYS: &[&str] = &[
    "d",
    "n_heads",
    "d_embed",
    "t_max",
    "l_ast",
    "l_cfg",
    "l_dfg",
    "conv_kernels",
    "conv_kh",
    "conv_kw",
    "mlp_hidden",
    "fusion",
    "provider",
    "metapath",
    "positions",
    "head_projections",
    "threshold",
];

pub fn checkpoint_header(
    cfg: &RunConfig,
    vocab_size: usize,
    mask: AblationMask,
) -> Vec<(String, String)> {
    let mut pairs = vec![
        ("d".to_string(), cfg.d.to_string()),
        ("n_heads".to_string(), cfg.n_heads.to_string()),
        ("d_embed".to_string(), cfg.d_embed.to_string()),
        ("t_max".to_string(), cfg.t_max.to_string()),
        ("l_ast".to_string(), cfg.l_ast.to_string()),
        ("l_cfg".to_string(), cfg.l_cfg.to_string()),
        ("l_dfg".to_string(), cfg.l_dfg.to_string()),
        ("conv_kernels".to_string(), cfg.conv_kernels.to_string()),
        ("conv_kh".to_string(), cfg.conv_kh.to_string()),
        ("conv_kw".to_string(), cfg.conv_kw.to_string()),
        ("mlp_hidden".to_string(), cfg.mlp_hidden.to_string()),
        ("fusion".to_string(), cfg.fusion.to_string()),
        ("provider".to_string(), cfg.provider.to_string()),
        ("metapath".to_string(), cfg.metapath.to_string()),
        ("positions".to_string(), cfg.positions.to_string()),
        (
            "head_projections".to_string(),
            cfg.head_projections.to_string(),
        ),
        ("threshold".to_string(), cfg.threshold.to_string()),
    ];
    pairs.push(("vocab_size".to_string(), vocab_size.to_string()));
    pairs.push(("mask".to_string(), mask.name()));
    pairs
}

/// Rebuild a configuration from header pairs: defaults overridden by the
/// recorded hyperparameters. Returns (config, vocab size, mask).
pub fn config_from_header(pairs: &[(String, String)]) -> Result<(RunConfig, usize, AblationMask)> {
    let mut cfg = RunConfig::default();
    let mut vocab_size = 0usize;
    let mut mask = AblationMask::full();
    for (k, v) in pairs {
        match k.as_str() {
            "vocab_size" => {
                vocab_size = v
                    .parse()
                    .map_err(|_| Error::format(format!("bad vocab_size '{v}'")))?;
            }
            "mask" => mask = AblationMask::parse(v)?,
            _ => cfg.apply_kv(k, v)?,
        }
    }
    Ok((cfg, vocab_size, mask))
}

/// Every architecture field in `cfg` must agree with the header.
pub fn validate_header_against(pairs: &[(String, String)], cfg: &RunConfig) -> Result<()> {
    let (header_cfg, _, _) = config_from_header(pairs)?;
    for key in ARCH_KEYS {
        let (a, b) = (field_str(&header_cfg, key), field_str(cfg, key));
        if a != b {
            return Err(Error::config(format!(
                "checkpoint {key}={a} does not match configured {key}={b}"
            )));
        }
    }
    Ok(())
}

fn field_str(cfg: &RunConfig, key: &str) -> String {
    match key {
        "d" => cfg.d.to_string(),
        "n_heads" => cfg.n_heads.to_string(),
        "d_embed" => cfg.d_embed.to_string(),
        "t_max" => cfg.t_max.to_string(),
        "l_ast" => cfg.l_ast.to_string(),
        "l_cfg" => cfg.l_cfg.to_string(),
        "l_dfg" => cfg.l_dfg.to_string(),
        "conv_kernels" => cfg.conv_kernels.to_string(),
        "conv_kh" => cfg.conv_kh.to_string(),
        "conv_kw" => cfg.conv_kw.to_string(),
        "mlp_hidden" => cfg.mlp_hidden.to_string(),
        "fusion" => cfg.fusion.to_string(),
        "provider" => cfg.provider.to_string(),
        "metapath" => cfg.metapath.to_string(),
        "positions" => cfg.positions.to_string(),
        "head_projections" => cfg.head_projections.to_string(),
        "threshold" => cfg.threshold.to_string(),
        _ => String::new(),
    }
}

pub fn save_checkpoint(
    path: &Path,
    header: &[(String, String)],
    params: &ModelParams,
) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(MAGIC)?;
    f.write_all(&VERSION.to_le_bytes())?;
    let header_text: String = header
        .iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect();
    let bytes = header_text.as_bytes();
    f.write_all(&(bytes.len() as u32).to_le_bytes())?;
    f.write_all(bytes)?;
    for (_, tensor) in params.named() {
        f.write_all(&(tensor.shape().len() as u32).to_le_bytes())?;
        for &dim in tensor.shape() {
            f.write_all(&(dim as u32).to_le_bytes())?;
        }
        for &v in tensor.data() {
            f.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(f: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    f.read_exact(&mut buf)
        .map_err(|_| Error::format("checkpoint truncated".to_string()))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_tensor<R: Read>(f: &mut R) -> Result<Tensor> {
    let rank = read_u32(f)? as usize;
    if rank > 4 {
        return Err(Error::format(format!("implausible tensor rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(read_u32(f)? as usize);
    }
    let len: usize = shape.iter().product();
    if len > (1 << 28) {
        return Err(Error::format(format!("tensor dimension overflow {shape:?}")));
    }
    let mut data = Vec::with_capacity(len);
    let mut buf = [0u8; 8];
    for _ in 0..len {
        f.read_exact(&mut buf)
            .map_err(|_| Error::format("checkpoint truncated".to_string()))?;
        data.push(f64::from_le_bytes(buf));
    }
    Ok(Tensor::from_vec(&shape, data))
}

pub fn load_checkpoint(path: &Path) -> Result<(Vec<(String, String)>, ModelParams)> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)
        .map_err(|_| Error::format(format!("{}: file too short", path.display())))?;
    if &magic != MAGIC {
        return Err(Error::format(format!("{}: bad magic", path.display())));
    }
    let version = read_u32(&mut f)?;
    if version != VERSION {
        return Err(Error::format(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let header_len = read_u32(&mut f)? as usize;
    let mut header_bytes = vec![0u8; header_len];
    f.read_exact(&mut header_bytes)
        .map_err(|_| Error::format(format!("{}: header truncated", path.display())))?;
    let header_text = String::from_utf8(header_bytes)
        .map_err(|_| Error::format(format!("{}: header is not UTF-8", path.display())))?;
    let mut header = Vec::new();
    for line in header_text.lines() {
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::format(format!("{}: bad header line '{line}'", path.display())));
        };
        header.push((k.to_string(), v.to_string()));
    }

    let (cfg, vocab_size, _) = config_from_header(&header)?;
    let d_k = if cfg.n_heads > 0 { cfg.d / cfg.n_heads } else { 0 };

    // Expected tensors in declared order: name and shape.
    let mut expected: Vec<(String, Vec<usize>)> = Vec::new();
    if cfg.provider == ProviderKind::Learned {
        expected.push(("embed_table".to_string(), vec![vocab_size, cfg.d_embed]));
    }
    for (name, w) in [
        ("proj_ast", cfg.l_ast),
        ("proj_cfg", cfg.l_cfg),
        ("proj_dfg", cfg.l_dfg),
        ("proj_css", cfg.d_embed),
    ] {
        expected.push((name.to_string(), vec![w, cfg.d]));
    }
    for name in ["w_o_ast", "w_o_cfg", "w_o_dfg", "w_o_css"] {
        expected.push((name.to_string(), vec![cfg.d, cfg.d]));
    }
    if cfg.head_projections {
        for view in super::model::VIEW_NAMES {
            for h in 0..cfg.n_heads {
                for role in ["q", "k", "v"] {
                    expected.push((format!("headproj_{view}_{h}_{role}"), vec![d_k, d_k]));
                }
            }
        }
    }
    expected.push((
        "conv_kernels".to_string(),
        vec![cfg.conv_kernels, cfg.conv_kh, cfg.conv_kw],
    ));
    expected.push(("mlp_w1".to_string(), vec![cfg.mlp_hidden, cfg.conv_kernels]));
    expected.push(("mlp_b1".to_string(), vec![cfg.mlp_hidden]));
    expected.push(("mlp_w2".to_string(), vec![1, cfg.mlp_hidden]));
    expected.push(("mlp_b2".to_string(), vec![1]));

    let mut tensors = Vec::with_capacity(expected.len());
    for (name, shape) in &expected {
        let t = read_tensor(&mut f)?;
        if t.shape() != shape.as_slice() {
            return Err(Error::format(format!(
                "{}: tensor {name} has shape {:?}, expected {:?}",
                path.display(),
                t.shape(),
                shape
            )));
        }
        tensors.push(t);
    }
    let mut buf = [0u8; 1];
    if f.read(&mut buf)? != 0 {
        return Err(Error::format(format!(
            "{}: trailing data after parameters",
            path.display()
        )));
    }

    let mut iter = tensors.into_iter();
    let embed_table = (cfg.provider == ProviderKind::Learned).then(|| iter.next().unwrap());
    let proj = [(); 4].map(|_| iter.next().unwrap());
    let w_o = [(); 4].map(|_| iter.next().unwrap());
    let head_proj = cfg
        .head_projections
        .then(|| (0..4 * cfg.n_heads * 3).map(|_| iter.next().unwrap()).collect());
    let params = ModelParams {
        embed_table,
        proj,
        w_o,
        head_proj,
        conv_kernels: iter.next().unwrap(),
        mlp_w1: iter.next().unwrap(),
        mlp_b1: iter.next().unwrap(),
        mlp_w2: iter.next().unwrap(),
        mlp_b2: iter.next().unwrap(),
    };
    Ok((header, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn tiny_cfg() -> RunConfig {
        RunConfig {
            d: 8,
            n_heads: 2,
            d_embed: 8,
            t_max: 4,
            l_ast: 4,
            l_cfg: 4,
            l_dfg: 4,
            conv_kernels: 1,
            conv_kh: 2,
            conv_kw: 2,
            mlp_hidden: 4,
            ..RunConfig::default()
        }
    }

    #[test]
    fn save_load_roundtrip_is_exact() {
        let cfg = tiny_cfg();
        let params = ModelParams::init(&cfg, Some(6), 3);
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.vfck");
        let header = checkpoint_header(&cfg, 6, AblationMask::full());
        save_checkpoint(&path, &header, &params).unwrap();
        let (back_header, back) = load_checkpoint(&path).unwrap();
        assert_eq!(back, params);
        let (cfg2, vocab2, mask2) = config_from_header(&back_header).unwrap();
        assert_eq!(vocab2, 6);
        assert_eq!(mask2, AblationMask::full());
        validate_header_against(&back_header, &cfg).unwrap();
        assert_eq!(cfg2.d, cfg.d);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.vfck");
        std::fs::write(&path, b"NOPE....").unwrap();
        assert!(load_checkpoint(&path).unwrap_err().to_string().contains("bad magic"));
    }

    #[test]
    fn mismatched_config_fails_validation() {
        let cfg = tiny_cfg();
        let header = checkpoint_header(&cfg, 6, AblationMask::full());
        let other = RunConfig {
            d: 16,
            ..tiny_cfg()
        };
        assert!(validate_header_against(&header, &other).is_err());
    }

    #[test]
    fn head_projection_checkpoints_roundtrip() {
        let cfg = RunConfig {
            head_projections: true,
            ..tiny_cfg()
        };
        let params = ModelParams::init(&cfg, Some(5), 9);
        assert!(params.head_proj.is_some());
        let dir = tempdir().unwrap();
        let path = dir.path().join("hp.vfck");
        let header = checkpoint_header(&cfg, 5, AblationMask::without(2));
        save_checkpoint(&path, &header, &params).unwrap();
        let (h, back) = load_checkpoint(&path).unwrap();
        assert_eq!(back, params);
        let (_, _, mask) = config_from_header(&h).unwrap();
        assert_eq!(mask, AblationMask::without(2));
    }
}
