//! Weight-file serialization.
//!
//! Layout, all integers little-endian: magic "ASLW", u32 version (1),
//! u32 num_classes, u32 tensor count, then per tensor a u16 name length,
//! the UTF-8 name, u8 ndim, ndim u32 dims, a u8 dtype tag (0 = f32), and
//! the raw little-endian payload. Tensors appear in layer order, batch-norm
//! moving statistics included, so a save/load round trip is bitwise exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"ASLW";
pub const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

impl Model<f32> {
    pub fn save_weights(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.cfg.num_classes as u32).to_le_bytes())?;
        let tensors = self.named_tensors();
        w.write_all(&(tensors.len() as u32).to_le_bytes())?;
        for (name, t) in tensors {
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&[t.shape().len() as u8])?;
            for &d in t.shape() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            w.write_all(&[DTYPE_F32])?;
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Build the stack for `cfg` and fill every tensor from the file. The
    /// file must carry exactly the tensors that architecture has, in
    /// order; a dimension clash (for example a checkpoint trained with a
    /// different class count) is reported against the offending tensor.
    pub fn load_weights(path: &Path, cfg: ModelConfig) -> Result<Model<f32>> {
        let mut r = BufReader::new(File::open(path)?);
        let header = read_header(&mut r, path)?;
        // weights are fully overwritten below; the seed only feeds the
        // throwaway initialization
        let mut model = Model::build(cfg, &Rng::new(0))?;
        let count = header.tensor_count as usize;
        let expected = model.named_tensors().len();
        if count != expected {
            return Err(Error::format(format!(
                "{}: file holds {count} tensors, the architecture has {expected}",
                path.display()
            )));
        }
        for (expect_name, tensor) in model.named_tensors_mut() {
            read_tensor_into(&mut r, expect_name, tensor)?;
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::format(format!(
                "{}: trailing bytes after the last tensor",
                path.display()
            )));
        }
        Ok(model)
    }
}

pub struct Header {
    pub num_classes: u32,
    pub tensor_count: u32,
}

/// Read just the header; `evaluate` and `predict` use this to size the
/// model before loading.
pub fn peek_header(path: &Path) -> Result<Header> {
    let mut r = BufReader::new(File::open(path)?);
    read_header(&mut r, path)
}

fn read_header(r: &mut impl Read, path: &Path) -> Result<Header> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format(format!("{}: too short for a weights file", path.display())))?;
    if magic != MAGIC {
        return Err(Error::format(format!(
            "{}: bad magic {magic:?}, not a weights file",
            path.display()
        )));
    }
    let version = read_u32(r, "version")?;
    if version != VERSION {
        return Err(Error::format(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let num_classes = read_u32(r, "num_classes")?;
    let tensor_count = read_u32(r, "tensor count")?;
    Ok(Header {
        num_classes,
        tensor_count,
    })
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::format(format!("truncated while reading {what}")))?;
    Ok(u32::from_le_bytes(b))
}

fn read_tensor_into(r: &mut impl Read, expect_name: &str, tensor: &mut Tensor<f32>) -> Result<()> {
    let fail = |reason: String| Error::format_at(expect_name, reason);

    let mut b2 = [0u8; 2];
    r.read_exact(&mut b2)
        .map_err(|_| fail("truncated at tensor name length".into()))?;
    let name_len = u16::from_le_bytes(b2) as usize;
    let mut name_bytes = vec![0u8; name_len];
    r.read_exact(&mut name_bytes)
        .map_err(|_| fail("truncated at tensor name".into()))?;
    let name = String::from_utf8(name_bytes)
        .map_err(|_| fail("tensor name is not UTF-8".into()))?;
    if name != expect_name {
        return Err(fail(format!("found tensor \"{name}\" where \"{expect_name}\" belongs")));
    }

    let mut b1 = [0u8; 1];
    r.read_exact(&mut b1)
        .map_err(|_| fail("truncated at rank".into()))?;
    let ndim = b1[0] as usize;
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)
            .map_err(|_| fail("truncated at dims".into()))?;
        dims.push(u32::from_le_bytes(b4) as usize);
    }
    if dims != tensor.shape() {
        return Err(fail(format!(
            "file shape {dims:?} does not match architecture shape {:?}",
            tensor.shape()
        )));
    }

    r.read_exact(&mut b1)
        .map_err(|_| fail("truncated at dtype".into()))?;
    if b1[0] != DTYPE_F32 {
        return Err(fail(format!("unsupported dtype tag {}", b1[0])));
    }
    let mut payload = vec![0u8; tensor.len() * 4];
    r.read_exact(&mut payload)
        .map_err(|_| fail("truncated payload".into()))?;
    for (v, chunk) in tensor.data_mut().iter_mut().zip(payload.chunks_exact(4)) {
        *v = f32::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::uniform;

    fn trained_ish_model(seed: u64) -> Model<f32> {
        // perturb batch-norm state so the round trip covers non-initial values
        let mut m = Model::build(ModelConfig::with_classes(30), &Rng::new(seed)).unwrap();
        let mut rng = Rng::new(seed ^ 0xABCD);
        let x = uniform(&mut rng, 0.0, 1.0, &[2, 50, 50, 3]).unwrap();
        m.forward_train(&x, &mut rng).unwrap();
        m
    }

    #[test]
    fn round_trip_is_bitwise_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.aslw");
        let model = trained_ish_model(1);
        model.save_weights(&path).unwrap();
        let loaded = Model::load_weights(&path, ModelConfig::with_classes(30)).unwrap();
        for ((na, ta), (nb, tb)) in model.named_tensors().into_iter().zip(loaded.named_tensors()) {
            assert_eq!(na, nb);
            assert_eq!(ta.data(), tb.data(), "tensor {na}");
        }

        // forward outputs agree bit for bit
        let mut rng = Rng::new(3);
        let x = uniform(&mut rng, 0.0, 1.0, &[2, 50, 50, 3]).unwrap();
        assert_eq!(
            model.forward_eval(&x).unwrap().data(),
            loaded.forward_eval(&x).unwrap().data()
        );
    }

    #[test]
    fn file_size_matches_the_format_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.aslw");
        let model = trained_ish_model(2);
        model.save_weights(&path).unwrap();
        let expect: usize = 4 + 4 + 4 + 4
            + model
                .named_tensors()
                .iter()
                .map(|(name, t)| 2 + name.len() + 1 + 4 * t.shape().len() + 1 + 4 * t.len())
                .sum::<usize>();
        assert_eq!(std::fs::metadata(&path).unwrap().len() as usize, expect);
        // payload dominates: 4 bytes per parameter
        let payload: usize = 4 * 2_029_470;
        assert!(expect > payload && expect < payload + 1024);
    }

    #[test]
    fn class_count_mismatch_names_the_final_dense_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.aslw");
        trained_ish_model(3).save_weights(&path).unwrap();
        match Model::load_weights(&path, ModelConfig::with_classes(29)) {
            Err(Error::Format { tensor: Some(t), .. }) => assert_eq!(t, "dense2/weights"),
            Err(other) => panic!("expected a format error naming dense2/weights, got {other:?}"),
            Ok(_) => panic!("load must fail on a class-count mismatch"),
        }
    }

    #[test]
    fn bad_magic_and_truncation_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.aslw");
        std::fs::write(&path, b"WRONGFORMAT").unwrap();
        assert!(matches!(
            Model::load_weights(&path, ModelConfig::default()),
            Err(Error::Format { .. })
        ));

        let good = dir.path().join("good.aslw");
        trained_ish_model(4).save_weights(&good).unwrap();
        let bytes = std::fs::read(&good).unwrap();
        let cut = dir.path().join("cut.aslw");
        std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
        match Model::load_weights(&cut, ModelConfig::with_classes(30)) {
            Err(Error::Format { .. }) => {}
            Err(other) => panic!("expected a format error, got {other:?}"),
            Ok(_) => panic!("load must fail on a truncated file"),
        }
    }

    #[test]
    fn peek_reads_the_class_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.aslw");
        trained_ish_model(5).save_weights(&path).unwrap();
        let h = peek_header(&path).unwrap();
        assert_eq!(h.num_classes, 30);
        assert_eq!(h.tensor_count, 20);
    }
}
