//! The growing multi-label model and its on-disk container.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::data::DenseMatrix;
use crate::error::{shape_err, Result, SllError};

const MAGIC: &[u8; 4] = b"SLLM";
const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    /// Lasso weight for arriving labels.
    pub lambda: f64,
    /// Prior weight for arriving classifiers.
    pub beta: f64,
    /// Initialization weights: sparsity, classifier structure, label reconstruction.
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lambda: 1.0,
            beta: 1.0,
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 10.0,
        }
    }
}

/// Representation coefficients recorded when a group of labels arrived.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalRecord {
    pub arrived: Vec<usize>,
    /// Label ids spanning the dictionary the coefficients refer to.
    pub basis: Vec<usize>,
    /// One sparse column per arrived label: `(position in basis, value)`.
    pub coeffs: Vec<Vec<(usize, f64)>>,
}

impl ArrivalRecord {
    /// Builds a record from dense columns, dropping exact zeros.
    pub fn from_dense(arrived: Vec<usize>, basis: Vec<usize>, s: &DenseMatrix) -> Result<Self> {
        if s.shape() != (basis.len(), arrived.len()) {
            return Err(shape_err(format!(
                "coefficients {:?} for {} basis labels and {} arrivals",
                s.shape(),
                basis.len(),
                arrived.len()
            )));
        }
        let coeffs = (0..arrived.len())
            .map(|j| {
                (0..basis.len())
                    .filter_map(|i| {
                        let v = s.get(i, j);
                        (v != 0.0).then_some((i, v))
                    })
                    .collect()
            })
            .collect();
        Ok(ArrivalRecord {
            arrived,
            basis,
            coeffs,
        })
    }

    pub fn nnz(&self) -> usize {
        self.coeffs.iter().map(|c| c.len()).sum()
    }

    /// Dense `|basis| x |arrived|` coefficient matrix.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut s = DenseMatrix::zeros(self.basis.len(), self.arrived.len());
        for (j, col) in self.coeffs.iter().enumerate() {
            for &(i, v) in col {
                s.set(i, j, v);
            }
        }
        s
    }

    fn validate(&self) -> Result<()> {
        if self.coeffs.len() != self.arrived.len() {
            return Err(SllError::ModelFormat(format!(
                "{} coefficient columns for {} arrivals",
                self.coeffs.len(),
                self.arrived.len()
            )));
        }
        for (label, col) in self.arrived.iter().zip(&self.coeffs) {
            for &(i, _) in col {
                if i >= self.basis.len() {
                    return Err(SllError::ModelFormat(format!("basis position {} out of range", i)));
                }
                if self.basis[i] == *label {
                    return Err(SllError::ModelFormat(format!(
                        "label {} carries a coefficient on itself",
                        label
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Classifier matrix `W` (one column per registered label), the label
/// registry, and the log of representation coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    weights: DenseMatrix,
    label_ids: Vec<usize>,
    positions: HashMap<usize, usize>,
    log: Vec<ArrivalRecord>,
    pub hyper: Hyperparams,
}

impl ModelState {
    pub fn new(dim: usize, hyper: Hyperparams) -> Self {
        ModelState {
            weights: DenseMatrix::zeros(dim, 0),
            label_ids: Vec::new(),
            positions: HashMap::new(),
            log: Vec::new(),
            hyper,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn n_labels(&self) -> usize {
        self.label_ids.len()
    }

    pub fn weights(&self) -> &DenseMatrix {
        &self.weights
    }

    pub fn label_ids(&self) -> &[usize] {
        &self.label_ids
    }

    pub fn log(&self) -> &[ArrivalRecord] {
        &self.log
    }

    pub fn contains(&self, label: usize) -> bool {
        self.positions.contains_key(&label)
    }

    /// Column of `label` in `W`.
    pub fn position(&self, label: usize) -> Result<usize> {
        self.positions.get(&label).copied().ok_or(SllError::InvalidLabelId {
            id: label,
            count: self.label_ids.len(),
        })
    }

    pub fn classifier(&self, label: usize) -> Result<Vec<f64>> {
        Ok(self.weights.column(self.position(label)?))
    }

    /// `d x |labels|` classifiers in the given order.
    pub fn weights_for(&self, labels: &[usize]) -> Result<DenseMatrix> {
        let cols = labels.iter().map(|&l| self.position(l)).collect::<Result<Vec<_>>>()?;
        Ok(self.weights.select_columns(&cols))
    }

    /// `W_basis s` for a sparse coefficient column over `basis`.
    pub fn prior(&self, basis: &[usize], coeffs: &[(usize, f64)]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        for &(i, v) in coeffs {
            let label = *basis
                .get(i)
                .ok_or_else(|| shape_err(format!("basis position {} of {}", i, basis.len())))?;
            let col = self.position(label)?;
            for (r, o) in out.iter_mut().enumerate() {
                *o += v * self.weights.get(r, col);
            }
        }
        Ok(out)
    }

    /// Appends the classifiers of `record.arrived` (columns of `new_weights`).
    pub fn register(&mut self, record: ArrivalRecord, new_weights: &DenseMatrix) -> Result<()> {
        record.validate()?;
        if new_weights.shape() != (self.dim(), record.arrived.len()) {
            return Err(shape_err(format!(
                "new classifiers {:?}, expected {}x{}",
                new_weights.shape(),
                self.dim(),
                record.arrived.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for &label in &record.arrived {
            if self.contains(label) || !seen.insert(label) {
                return Err(SllError::DuplicateLabel(label));
            }
        }
        for &label in &record.basis {
            if !self.contains(label) && !seen.contains(&label) {
                return Err(SllError::InvalidLabelId {
                    id: label,
                    count: self.label_ids.len(),
                });
            }
        }
        self.weights = self.weights.hstack(new_weights)?;
        for &label in &record.arrived {
            self.positions.insert(label, self.label_ids.len());
            self.label_ids.push(label);
        }
        self.log.push(record);
        Ok(())
    }

    /// Replaces all classifiers at once; the registry is unchanged.
    pub fn set_weights(&mut self, weights: DenseMatrix) -> Result<()> {
        if weights.shape() != self.weights.shape() {
            return Err(shape_err(format!("{:?} vs {:?}", weights.shape(), self.weights.shape())));
        }
        self.weights = weights;
        Ok(())
    }

    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&[FORMAT_VERSION])?;
        put_u64(&mut out, self.dim() as u64)?;
        put_u64(&mut out, self.n_labels() as u64)?;
        for &l in &self.label_ids {
            put_u64(&mut out, l as u64)?;
        }
        let h = &self.hyper;
        for v in [h.lambda, h.beta, h.lambda1, h.lambda2, h.lambda3] {
            put_f64(&mut out, v)?;
        }
        for &v in self.weights.as_slice() {
            put_f64(&mut out, v)?;
        }
        put_u64(&mut out, self.log.len() as u64)?;
        for rec in &self.log {
            put_ids(&mut out, &rec.arrived)?;
            put_ids(&mut out, &rec.basis)?;
            for col in &rec.coeffs {
                put_u64(&mut out, col.len() as u64)?;
                for &(i, v) in col {
                    put_u64(&mut out, i as u64)?;
                    put_f64(&mut out, v)?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn load<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut input, &mut magic)?;
        if &magic != MAGIC {
            return Err(SllError::ModelFormat("bad magic bytes".into()));
        }
        let mut version = [0u8; 1];
        read_exact(&mut input, &mut version)?;
        if version[0] != FORMAT_VERSION {
            return Err(SllError::ModelFormat(format!("unsupported version {}", version[0])));
        }
        let d = get_len(&mut input)?;
        let l = get_len(&mut input)?;
        let label_ids = (0..l).map(|_| get_len(&mut input)).collect::<Result<Vec<_>>>()?;
        let mut hv = [0.0; 5];
        for v in hv.iter_mut() {
            *v = get_f64(&mut input)?;
        }
        let hyper = Hyperparams {
            lambda: hv[0],
            beta: hv[1],
            lambda1: hv[2],
            lambda2: hv[3],
            lambda3: hv[4],
        };
        let cells = d
            .checked_mul(l)
            .ok_or_else(|| SllError::ModelFormat("weight matrix size overflows".into()))?;
        let mut data = Vec::with_capacity(cells.min(1 << 24));
        for _ in 0..cells {
            data.push(get_f64(&mut input)?);
        }
        let weights = DenseMatrix::from_vec(d, l, data).map_err(|e| SllError::ModelFormat(e.to_string()))?;
        let n_records = get_len(&mut input)?;
        let mut log = Vec::new();
        for _ in 0..n_records {
            let arrived = get_ids(&mut input)?;
            let basis = get_ids(&mut input)?;
            let mut coeffs = Vec::with_capacity(arrived.len());
            for _ in 0..arrived.len() {
                let nnz = get_len(&mut input)?;
                let mut col = Vec::new();
                for _ in 0..nnz {
                    let i = get_len(&mut input)?;
                    col.push((i, get_f64(&mut input)?));
                }
                coeffs.push(col);
            }
            let rec = ArrivalRecord {
                arrived,
                basis,
                coeffs,
            };
            rec.validate()?;
            log.push(rec);
        }
        let mut positions = HashMap::new();
        for (i, &label) in label_ids.iter().enumerate() {
            if positions.insert(label, i).is_some() {
                return Err(SllError::DuplicateLabel(label));
            }
        }
        Ok(ModelState {
            weights,
            label_ids,
            positions,
            log,
            hyper,
        })
    }
}

fn put_u64<W: Write>(out: &mut W, v: u64) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64<W: Write>(out: &mut W, v: f64) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_ids<W: Write>(out: &mut W, ids: &[usize]) -> Result<()> {
    put_u64(out, ids.len() as u64)?;
    for &i in ids {
        put_u64(out, i as u64)?;
    }
    Ok(())
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => SllError::ModelFormat("truncated model file".into()),
        _ => SllError::Io(e),
    })
}

fn get_len<R: Read>(input: &mut R) -> Result<usize> {
    let mut b = [0u8; 8];
    read_exact(input, &mut b)?;
    usize::try_from(u64::from_le_bytes(b)).map_err(|_| SllError::ModelFormat("length overflows usize".into()))
}

fn get_f64<R: Read>(input: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(input, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_ids<R: Read>(input: &mut R) -> Result<Vec<usize>> {
    let n = get_len(input)?;
    (0..n).map(|_| get_len(input)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_label_state() -> ModelState {
        let mut st = ModelState::new(2, Hyperparams::default());
        let rec = ArrivalRecord::from_dense(vec![4, 1], vec![4, 1], &DenseMatrix::from_rows(&[vec![0.0, 0.5], vec![0.25, 0.0]]).unwrap())
            .unwrap();
        st.register(rec, &DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap()).unwrap();
        st
    }

    #[test]
    fn registry_tracks_columns() {
        let st = two_label_state();
        assert_eq!(st.label_ids(), &[4, 1]);
        assert_eq!(st.classifier(1).unwrap(), vec![2.0, 4.0]);
        assert!(matches!(st.position(0), Err(SllError::InvalidLabelId { .. })));
    }

    #[test]
    fn duplicate_registration_is_rejected() {
        let mut st = two_label_state();
        let rec = ArrivalRecord {
            arrived: vec![1],
            basis: vec![4],
            coeffs: vec![vec![]],
        };
        assert!(matches!(st.register(rec, &DenseMatrix::zeros(2, 1)), Err(SllError::DuplicateLabel(1))));
    }

    #[test]
    fn self_coefficient_is_rejected() {
        let mut st = two_label_state();
        let rec = ArrivalRecord {
            arrived: vec![7],
            basis: vec![4, 7],
            coeffs: vec![vec![(1, 0.3)]],
        };
        assert!(st.register(rec, &DenseMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn prior_combines_columns() {
        let st = two_label_state();
        let p = st.prior(&[4, 1], &[(0, 2.0), (1, -1.0)]).unwrap();
        assert_eq!(p, vec![0.0, 2.0]);
    }

    #[test]
    fn binary_round_trip() {
        let st = two_label_state();
        let mut buf = Vec::new();
        st.save(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"SLLM");
        assert_eq!(buf[4], FORMAT_VERSION);
        let back = ModelState::load(&buf[..]).unwrap();
        assert_eq!(back, st);
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let st = two_label_state();
        let mut buf = Vec::new();
        st.save(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(ModelState::load(&buf[..]), Err(SllError::ModelFormat(_))));
        assert!(matches!(ModelState::load(&b"XXXX\x01"[..]), Err(SllError::ModelFormat(_))));
    }
}
