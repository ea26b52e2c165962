//! CSV node tables and small file helpers shared by the modules.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::GridDomain;

/// Writes `node_x,node_y,<column>` rows for every node of the domain.
pub fn write_node_table<W: Write>(domain: &GridDomain, values: &[f64], column: &str, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["node_x", "node_y", column])?;
    for (i, v) in values.iter().enumerate() {
        let p = domain.point(i);
        wtr.serialize((p[0], p[1], *v))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a `node_x,node_y,value` table back onto the grid nodes.
pub fn read_node_table<R: Read>(domain: &GridDomain, r: R) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut values = vec![f64::NAN; domain.len()];
    for row in rdr.deserialize() {
        let (x, y, v): (f64, f64, f64) = row?;
        let i = domain.nearest_node([x, y]);
        let p = domain.point(i);
        if (p[0] - x).abs() > 1e-6 * domain.h || (p[1] - y).abs() > 1e-6 * domain.h {
            return Err(Error::InvalidSpec(format!("row ({x}, {y}) is not a grid node")));
        }
        values[i] = v;
    }
    if let Some(missing) = values.iter().position(|v| v.is_nan()) {
        return Err(Error::InvalidSpec(format!("node table misses node {missing} at {:?}", domain.point(missing))));
    }
    Ok(values)
}

/// Writes a value as pretty JSON followed by a newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn create_file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_domain, DomainSpec, Fixture};

    #[test]
    fn node_table_round_trip() {
        let d = build_domain(&DomainSpec::new(Fixture::Square, 0.25)).unwrap();
        let values: Vec<f64> = (0..d.len()).map(|i| (i as f64).sqrt() - 1.3).collect();
        let mut buf = Vec::new();
        write_node_table(&d, &values, "value", &mut buf).unwrap();
        let back = read_node_table(&d, buf.as_slice()).unwrap();
        assert_eq!(values, back);
        let truncated: String = String::from_utf8(buf).unwrap().lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(read_node_table(&d, truncated.as_bytes()).is_err());
    }
}
