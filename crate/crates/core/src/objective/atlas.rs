use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AtlasError {
    #[error("invalid region name {0:?}: use letters, digits and underscores")]
    InvalidName(String),
    #[error("region {0:?} is defined more than once")]
    DuplicateRegion(String),
    #[error("region {0:?} has no voxels")]
    EmptyRegion(String),
    #[error("region {region:?} contains voxel {index}, but there are only {n_voxels} voxels")]
    IndexOutOfBounds {
        region: String,
        index: usize,
        n_voxels: usize,
    },
    #[error("atlas line {line}: {message}")]
    Syntax { line: usize, message: String },
}

/// Named voxel sets. Region order is preserved; indices are sorted and unique.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RoiAtlas {
    regions: Vec<(String, Vec<usize>)>,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

pub(crate) fn check_region(name: &str, voxels: &[usize], n_voxels: usize) -> Result<(), AtlasError> {
    if voxels.is_empty() {
        return Err(AtlasError::EmptyRegion(name.to_string()));
    }
    match voxels.iter().find(|&&v| v >= n_voxels) {
        Some(&index) => Err(AtlasError::IndexOutOfBounds {
            region: name.to_string(),
            index,
            n_voxels,
        }),
        None => Ok(()),
    }
}

impl RoiAtlas {
    pub fn new<I, S>(regions: I) -> Result<Self, AtlasError>
    where
        I: IntoIterator<Item = (S, Vec<usize>)>,
        S: Into<String>,
    {
        let mut atlas = Self::default();
        for (name, voxels) in regions {
            atlas.insert(name.into(), voxels)?;
        }
        Ok(atlas)
    }

    pub fn insert(&mut self, name: String, mut voxels: Vec<usize>) -> Result<(), AtlasError> {
        if !valid_name(&name) {
            return Err(AtlasError::InvalidName(name));
        }
        if self.get(&name).is_some() {
            return Err(AtlasError::DuplicateRegion(name));
        }
        if voxels.is_empty() {
            return Err(AtlasError::EmptyRegion(name));
        }
        voxels.sort_unstable();
        voxels.dedup();
        self.regions.push((name, voxels));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&[usize]> {
        self.regions
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&str, &[usize])> + '_ {
        self.regions.iter().map(|(n, v)| (n.as_str(), v.as_slice()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> + '_ {
        self.regions.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Checks every region against a voxel count.
    pub fn validate(&self, n_voxels: usize) -> Result<(), AtlasError> {
        self.regions
            .iter()
            .try_for_each(|(n, v)| check_region(n, v, n_voxels))
    }

    /// Parses the line format `NAME: i1,i2,i3`. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn from_text(text: &str) -> Result<Self, AtlasError> {
        let mut atlas = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |message: String| AtlasError::Syntax {
                line: i + 1,
                message,
            };
            let (name, rest) = line
                .split_once(':')
                .ok_or_else(|| syntax("expected `NAME: i1,i2,...`".into()))?;
            let name = name.trim();
            let voxels = rest
                .split(',')
                .map(|s| {
                    let s = s.trim();
                    s.parse::<usize>()
                        .map_err(|_| syntax(format!("invalid voxel index {s:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            atlas.insert(name.to_string(), voxels)?;
        }
        Ok(atlas)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, voxels) in &self.regions {
            let idx: Vec<String> = voxels.iter().map(ToString::to_string).collect();
            let _ = writeln!(out, "{name}: {}", idx.join(","));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_line_format() {
        let a = RoiAtlas::from_text("# regions\nFFA: 3,1,2\n\nPPA:4, 5\n").unwrap();
        assert_eq!(a.get("FFA"), Some(&[1, 2, 3][..]));
        assert_eq!(a.get("PPA"), Some(&[4, 5][..]));
        assert_eq!(a.names().collect::<Vec<_>>(), vec!["FFA", "PPA"]);
        assert_eq!(RoiAtlas::from_text(&a.to_text()).unwrap(), a);
    }

    #[test]
    fn syntax_errors_carry_line() {
        assert_eq!(
            RoiAtlas::from_text("A: 1\nB 2").unwrap_err(),
            AtlasError::Syntax {
                line: 2,
                message: "expected `NAME: i1,i2,...`".into()
            }
        );
        assert!(matches!(
            RoiAtlas::from_text("A: 1,x"),
            Err(AtlasError::Syntax { line: 1, .. })
        ));
        assert!(matches!(RoiAtlas::from_text("A:"), Err(AtlasError::Syntax { .. })));
        assert!(matches!(RoiAtlas::from_text("A-B: 1"), Err(AtlasError::InvalidName(_))));
        assert!(matches!(
            RoiAtlas::from_text("A: 1\nA: 2"),
            Err(AtlasError::DuplicateRegion(_))
        ));
    }

    #[test]
    fn bounds_validation() {
        let a = RoiAtlas::new([("R", vec![0, 9])]).unwrap();
        assert!(a.validate(10).is_ok());
        assert!(a.validate(9).is_err());
        assert!(RoiAtlas::new([("E", vec![])]).is_err());
    }
}
