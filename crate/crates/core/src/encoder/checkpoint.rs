//! Plain-text parameter checkpoints.
//!
//! ```text
//! cnce-mlp,1
//! dims,1,10,10,8
//! layer0.weight,10,<values>
//! layer0.bias,10,<values>
//! ...
//! ```
//!
//! Values use 17 significant digits so a save/load round trip is bit-exact.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

use super::Mlp;

const MAGIC: &str = "cnce-mlp";
const VERSION: u32 = 1;

pub fn save<W: Write>(mlp: &Mlp, mut out: W) -> Result<()> {
    writeln!(out, "{MAGIC},{VERSION}")?;
    let dims: Vec<String> = mlp.dims().iter().map(usize::to_string).collect();
    writeln!(out, "dims,{}", dims.join(","))?;
    for l in 0..mlp.num_layers() {
        let (w, b) = mlp.layer(l);
        for (name, values) in [("weight", w), ("bias", b)] {
            write!(out, "layer{l}.{name},{}", values.len())?;
            for v in values {
                write!(out, ",{v:.16e}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn load<R: BufRead>(input: R) -> Result<Mlp> {
    let mut lines = input.lines();
    let mut next = || -> Result<String> {
        lines.next().ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))?.map_err(Error::from)
    };
    let header = next()?;
    if header != format!("{MAGIC},{VERSION}") {
        return Err(Error::Checkpoint(format!("unsupported header {header:?}")));
    }
    let dims_line = next()?;
    let dims = dims_line
        .strip_prefix("dims,")
        .ok_or_else(|| Error::Checkpoint("missing dims line".into()))?
        .split(',')
        .map(|s| s.parse::<usize>().map_err(|e| Error::Checkpoint(format!("bad dim {s:?}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let mut mlp = Mlp::zeros(&dims)?;
    for l in 0..mlp.num_layers() {
        for name in ["weight", "bias"] {
            let line = next()?;
            let mut fields = line.split(',');
            let expected_name = format!("layer{l}.{name}");
            if fields.next() != Some(expected_name.as_str()) {
                return Err(Error::Checkpoint(format!("expected {expected_name}, got {line:.40}")));
            }
            let count: usize = fields
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| Error::Checkpoint(format!("missing count for {expected_name}")))?;
            let values = fields
                .map(|s| s.parse::<f64>().map_err(|e| Error::Checkpoint(format!("bad value {s:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            let (w, b) = mlp.layer_mut(l);
            let target = if name == "weight" { w } else { b };
            if values.len() != count || count != target.len() {
                return Err(Error::Checkpoint(format!(
                    "{expected_name}: expected {} values, found {}",
                    target.len(),
                    values.len()
                )));
            }
            target.copy_from_slice(&values);
        }
    }
    Ok(mlp)
}
