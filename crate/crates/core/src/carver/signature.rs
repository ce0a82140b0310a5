use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable naming a default signature catalog.
pub const CATALOG_ENV: &str = "EXFAT_FORENSIC_SIGNATURES";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    /// Headers are only looked for at cluster starts; files always begin
    /// on a cluster boundary.
    #[default]
    ClusterStart,
    /// Every sector; no cluster alignment guarantee.
    EverySector,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub name: String,
    #[serde(with = "crate::hexser")]
    pub header: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub footer: Option<Vec<u8>>,
    pub granularity: Granularity,
}

impl Signature {
    pub fn new(name: impl Into<String>, header: Vec<u8>, footer: Option<Vec<u8>>) -> Result<Self> {
        if header.is_empty() {
            return Err(Error::InvalidOperation("signature header must not be empty".into()));
        }
        Ok(Signature {
            name: name.into(),
            header,
            footer: footer.filter(|f| !f.is_empty()),
            granularity: Granularity::ClusterStart,
        })
    }

    pub fn jpeg() -> Self {
        Signature {
            name: "jpeg".into(),
            header: vec![0xFF, 0xD8],
            footer: Some(vec![0xFF, 0xD9]),
            granularity: Granularity::ClusterStart,
        }
    }
}

pub fn builtin() -> Vec<Signature> {
    vec![Signature::jpeg()]
}

fn hex_field(s: &str) -> std::result::Result<Vec<u8>, String> {
    let cleaned: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let cleaned = cleaned.strip_prefix("0x").unwrap_or(&cleaned);
    hex::decode(cleaned).map_err(|e| format!("bad hex {s:?}: {e}"))
}

/// Parses catalog lines `name, header-hex[, footer-hex[, cluster|sector]]`.
/// Blank lines and `#` comments are skipped.
pub fn parse_catalog(text: &str) -> Result<Vec<Signature>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| Error::SignatureCatalog { line: i + 1, reason };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 || fields.len() > 4 || fields[0].is_empty() {
            return Err(err("expected name, header-hex[, footer-hex[, granularity]]".into()));
        }
        let header = hex_field(fields[1]).map_err(err)?;
        if header.is_empty() {
            return Err(err("empty header".into()));
        }
        let footer = match fields.get(2) {
            Some(f) if !f.is_empty() => Some(hex_field(f).map_err(err)?),
            _ => None,
        };
        let granularity = match fields.get(3).copied() {
            None | Some("") | Some("cluster") => Granularity::ClusterStart,
            Some("sector") => Granularity::EverySector,
            Some(g) => return Err(err(format!("unknown granularity {g:?}"))),
        };
        out.push(Signature {
            name: fields[0].to_string(),
            header,
            footer,
            granularity,
        });
    }
    Ok(out)
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Vec<Signature>> {
    parse_catalog(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_lines() {
        let sigs = parse_catalog(
            "# name, header, footer\n\
             jpeg, FFD8, FFD9\n\
             png, 89504E470D0A1A0A, 49454E44AE426082\n\
             pdf, 25504446\n\
             zip, 504B0304, , sector\n",
        )
        .unwrap();
        assert_eq!(sigs.len(), 4);
        assert_eq!(sigs[0], Signature::jpeg());
        assert_eq!(sigs[2].footer, None);
        assert_eq!(sigs[3].granularity, Granularity::EverySector);
    }

    #[test]
    fn bad_lines() {
        assert!(matches!(
            parse_catalog("x\n"),
            Err(Error::SignatureCatalog { line: 1, .. })
        ));
        assert!(matches!(
            parse_catalog("\nx, zz\n"),
            Err(Error::SignatureCatalog { line: 2, .. })
        ));
        assert!(parse_catalog("x, , FF\n").is_err());
        assert!(Signature::new("x", vec![], None).is_err());
    }
}
