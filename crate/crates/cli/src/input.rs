//! Header-addressed CSV ingestion.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Expected columns of one input file, matched by header name.
#[derive(Debug, Clone, Copy)]
pub struct Schema {
    pub name: &'static str,
    pub required: &'static [&'static str],
    pub optional: &'static [&'static str],
}

pub const KNIFE_EDGE: Schema = Schema { name: "knife-edge", required: &["x_um", "power_uW"], optional: &["z_um"] };
pub const CAUSTIC: Schema = Schema { name: "caustic", required: &["z_um", "w_um"], optional: &["w_err_um"] };
pub const TIMESTAMPS: Schema = Schema { name: "timestamps", required: &["t_ns"], optional: &[] };
pub const SATURATION: Schema = Schema { name: "saturation", required: &["power_uW", "counts_per_s"], optional: &[] };
pub const POLARIZATION: Schema =
    Schema { name: "polarization", required: &["angle_deg", "counts_per_s"], optional: &[] };
pub const SPECTRUM: Schema = Schema { name: "spectrum", required: &["wavelength_nm", "intensity"], optional: &[] };
pub const PULSE: Schema = Schema { name: "pulse", required: &["t_ns", "intensity"], optional: &[] };
pub const ODMR: Schema = Schema { name: "odmr", required: &["freq_mhz", "fluorescence"], optional: &[] };

/// Parsed numeric columns plus any non-fatal diagnostics.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: BTreeMap<String, Vec<f64>>,
    pub warnings: Vec<String>,
    pub rows: usize,
}

impl Table {
    pub fn column(&self, name: &str) -> &[f64] {
        self.columns.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn has(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }
}

pub fn parse_csv(path: &Path, schema: &Schema) -> Result<Table> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_csv_bytes(&bytes, &path.display().to_string(), schema)
}

/// Parses `bytes` as CSV with a header row. `origin` names the source in
/// diagnostics.
pub fn parse_csv_bytes(bytes: &[u8], origin: &str, schema: &Schema) -> Result<Table> {
    let text = std::str::from_utf8(bytes).with_context(|| format!("{origin}: not valid UTF-8"))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers: Vec<String> =
        reader.headers().with_context(|| format!("{origin}: cannot read header row"))?.iter().map(str::to_owned).collect();
    if headers.iter().all(String::is_empty) {
        bail!("{origin}: missing header row");
    }

    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, h) in headers.iter().enumerate() {
        if index.insert(h.as_str(), i).is_some() {
            bail!("{origin}: duplicate column '{h}'");
        }
    }
    for name in schema.required {
        if !index.contains_key(name) {
            bail!("{origin}: missing required column '{name}' for {} input", schema.name);
        }
    }

    let mut table = Table::default();
    for h in &headers {
        if !schema.required.contains(&h.as_str()) && !schema.optional.contains(&h.as_str()) {
            table.warnings.push(format!("{origin}: ignoring unknown column '{h}'"));
        }
    }
    let wanted: Vec<(&str, usize)> = schema
        .required
        .iter()
        .chain(schema.optional)
        .filter_map(|name| index.get(name).map(|&i| (*name, i)))
        .collect();
    for (name, _) in &wanted {
        table.columns.insert((*name).to_owned(), Vec::new());
    }

    for record in reader.records() {
        let record = record.with_context(|| format!("{origin}: malformed CSV"))?;
        let line = record.position().map_or(0, |p| p.line());
        for &(name, i) in &wanted {
            let cell = record.get(i).unwrap_or("");
            let value: f64 = cell
                .parse()
                .map_err(|_| anyhow::anyhow!("{origin}:{line}: column '{name}': cannot parse '{cell}' as a number"))?;
            table.columns.get_mut(name).expect("column registered above").push(value);
        }
        table.rows += 1;
    }
    Ok(table)
}

/// Writes `(header, column)` pairs as CSV. Values use the shortest
/// representation that round-trips.
pub fn write_csv(path: &Path, columns: &[(&str, &[f64])]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    writer.write_record(columns.iter().map(|c| c.0))?;
    let rows = columns.first().map_or(0, |c| c.1.len());
    for r in 0..rows {
        writer.write_record(columns.iter().map(|c| c.1.get(r).map_or(String::new(), |v| v.to_string())))?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_by_name_not_position() {
        let t = parse_csv_bytes(b"power_uW,x_um\n1,2\n3,4\n", "mem", &KNIFE_EDGE).unwrap();
        assert_eq!(t.column("x_um"), &[2.0, 4.0]);
        assert_eq!(t.column("power_uW"), &[1.0, 3.0]);
        assert!(t.warnings.is_empty());
    }

    #[test]
    fn missing_column_is_named() {
        let err = parse_csv_bytes(b"x_um\n1\n", "mem", &KNIFE_EDGE).unwrap_err().to_string();
        assert!(err.contains("power_uW"), "{err}");
    }

    #[test]
    fn unknown_column_warns() {
        let t = parse_csv_bytes(b"x_um,power_uW,note\n1,2,3\n", "mem", &KNIFE_EDGE).unwrap();
        assert_eq!(t.warnings.len(), 1);
        assert!(t.warnings[0].contains("note"));
    }

    #[test]
    fn bad_cell_reports_line() {
        let err = parse_csv_bytes(b"x_um,power_uW\n1,2\n3,abc\n", "mem", &KNIFE_EDGE).unwrap_err().to_string();
        assert!(err.contains(":3:") && err.contains("abc"), "{err}");
    }

    #[test]
    fn duplicate_header_rejected() {
        assert!(parse_csv_bytes(b"x_um,x_um,power_uW\n1,2,3\n", "mem", &KNIFE_EDGE).is_err());
    }
}
