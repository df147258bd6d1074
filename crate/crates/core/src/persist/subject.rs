//! Synthetic subjects: `subject.toml` holds the spec; `directions.nvtf`
//! `[regions, tokens·dim]`, `tuning.nvtf` `[voxels, tokens·dim]` and
//! `biases.nvtf` `[voxels]` hold the generated parameters.

use std::path::Path;

use super::tensor::{read_tensor, write_tensor, Tensor};
use super::{create_dir, from_toml, read_text, to_toml, write_atomic, PersistError};
use crate::matrix::Matrix;
use crate::synthetic::{SubjectSpec, SyntheticSubject};

const SPEC: &str = "subject.toml";

pub fn save_subject(dir: &Path, s: &SyntheticSubject) -> Result<(), PersistError> {
    create_dir(dir)?;
    let len = s.shape().len();
    let dirs: Vec<f64> = s.directions().iter().flatten().copied().collect();
    write_tensor(&dir.join("directions.nvtf"), &Tensor::f64(&[s.directions().len(), len], dirs)?)?;
    let t = s.tuning();
    write_tensor(
        &dir.join("tuning.nvtf"),
        &Tensor::f64(&[t.rows(), t.cols()], t.as_slice().to_vec())?,
    )?;
    write_tensor(&dir.join("biases.nvtf"), &Tensor::f64(&[s.biases().len()], s.biases().to_vec())?)?;
    write_atomic(&dir.join(SPEC), to_toml(s.spec())?.as_bytes())
}

pub fn load_subject(dir: &Path) -> Result<SyntheticSubject, PersistError> {
    let spec_path = dir.join(SPEC);
    let spec: SubjectSpec = from_toml(&spec_path, &read_text(&spec_path)?)?;
    let len = spec.shape.len();
    let dirs = read_tensor(&dir.join("directions.nvtf"))?.into_f64()?;
    if len == 0 || dirs.len() % len != 0 {
        return Err(PersistError::InvalidTensor("directions do not match subject shape".into()));
    }
    let directions = dirs.chunks(len).map(<[f64]>::to_vec).collect();
    let tpath = dir.join("tuning.nvtf");
    let tt = read_tensor(&tpath)?;
    let &[rows, cols] = tt.dims_usize().as_slice() else {
        return Err(PersistError::InvalidTensor("tuning must be 2-D".into()).at(&tpath));
    };
    let tuning = Matrix::new(rows, cols, tt.into_f64()?)
        .map_err(|e| PersistError::InvalidTensor(e.to_string()).at(&tpath))?;
    let biases = read_tensor(&dir.join("biases.nvtf"))?.into_f64()?;
    Ok(SyntheticSubject::from_parts(spec, directions, tuning, biases)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingShape;
    use crate::synthetic::Nonlinearity;

    #[test]
    fn round_trip() {
        let mut spec = SubjectSpec::new(EmbeddingShape::new(2, 4).unwrap(), &[("FFA", 3), ("PPA", 2)], 5);
        spec.background_voxels = 2;
        spec.bias_sigma = 0.3;
        spec.nonlinearity = Nonlinearity::Relu;
        let s = SyntheticSubject::generate(spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_subject(dir.path(), &s).unwrap();
        assert_eq!(load_subject(dir.path()).unwrap(), s);
    }
}
