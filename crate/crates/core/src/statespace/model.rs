use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::lyapunov::initial_covariance;

/// Linear Gaussian state-space model
///
/// ```text
/// y_t = d_t + Z a_t + e_t,          e_t ~ N(0, H)
/// a_t = c_t + T a_{t-1} + R n_t,    n_t ~ N(0, Q)
/// a_1 ~ N(a1, P1)
/// ```
///
/// `d_t` and `c_t` default to `d` and `c`; the optional per-period
/// sequences replace them and carry exogenous inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceModel {
    #[serde(with = "matrix_json")]
    pub z: DMatrix<f64>,
    #[serde(with = "vector_json")]
    pub d: DVector<f64>,
    #[serde(with = "matrix_json")]
    pub h: DMatrix<f64>,
    #[serde(with = "matrix_json")]
    pub t: DMatrix<f64>,
    #[serde(with = "vector_json")]
    pub c: DVector<f64>,
    #[serde(with = "matrix_json")]
    pub r: DMatrix<f64>,
    #[serde(with = "matrix_json")]
    pub q: DMatrix<f64>,
    #[serde(with = "vector_json")]
    pub a1: DVector<f64>,
    #[serde(with = "matrix_json")]
    pub p1: DMatrix<f64>,
    /// `c_t` for each period; index 0 is unused because `a1` already is the
    /// prior of the first state.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_vectors_json")]
    pub state_intercepts: Option<Vec<DVector<f64>>>,
    /// `d_t` for each period.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_vectors_json")]
    pub obs_intercepts: Option<Vec<DVector<f64>>>,
}

impl StateSpaceModel {
    /// Builds a model with zero intercepts and validates it.
    pub fn new(
        z: DMatrix<f64>,
        h: DMatrix<f64>,
        t: DMatrix<f64>,
        r: DMatrix<f64>,
        q: DMatrix<f64>,
        a1: DVector<f64>,
        p1: DMatrix<f64>,
    ) -> Result<Self> {
        let (n, m) = z.shape();
        let model = Self {
            d: DVector::zeros(n),
            c: DVector::zeros(m),
            z,
            h,
            t,
            r,
            q,
            a1,
            p1,
            state_intercepts: None,
            obs_intercepts: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn n_obs(&self) -> usize {
        self.z.nrows()
    }

    pub fn n_states(&self) -> usize {
        self.t.nrows()
    }

    /// `R Q R'`.
    pub fn state_cov(&self) -> DMatrix<f64> {
        &self.r * &self.q * self.r.transpose()
    }

    pub fn state_intercept(&self, t: usize) -> &DVector<f64> {
        match &self.state_intercepts {
            Some(cs) => &cs[t],
            None => &self.c,
        }
    }

    pub fn obs_intercept(&self, t: usize) -> &DVector<f64> {
        match &self.obs_intercepts {
            Some(ds) => &ds[t],
            None => &self.d,
        }
    }

    /// Replaces `(a1, P1)` with zero mean and the stationary covariance of
    /// each stable block, `1e6 I` for the others.
    pub fn with_default_init(mut self) -> Result<Self> {
        self.a1 = DVector::zeros(self.n_states());
        self.p1 = initial_covariance(&self.t, &self.state_cov())?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = self.z.shape();
        let g = self.r.ncols();
        let shape = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Shape(format!("{what} inconsistent with N={n}, m={m}, r={g}")))
            }
        };
        shape(self.d.len() == n, "d")?;
        shape(self.h.shape() == (n, n), "H")?;
        shape(self.t.shape() == (m, m), "T")?;
        shape(self.c.len() == m, "c")?;
        shape(self.r.nrows() == m, "R")?;
        shape(self.q.shape() == (g, g), "Q")?;
        shape(self.a1.len() == m, "a1")?;
        shape(self.p1.shape() == (m, m), "P1")?;
        if let Some(cs) = &self.state_intercepts {
            shape(cs.iter().all(|c| c.len() == m), "c_t")?;
        }
        if let Some(ds) = &self.obs_intercepts {
            shape(ds.iter().all(|d| d.len() == n), "d_t")?;
        }
        for (name, mat) in [("H", &self.h), ("Q", &self.q), ("P1", &self.p1)] {
            check_psd(name, mat)?;
        }
        let finite = [&self.z, &self.h, &self.t, &self.r, &self.q, &self.p1]
            .iter()
            .all(|mat| mat.iter().all(|v| v.is_finite()))
            && self.a1.iter().chain(self.c.iter()).chain(self.d.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Numeric("non-finite model entry".into()));
        }
        Ok(())
    }
}

fn check_psd(name: &str, m: &DMatrix<f64>) -> Result<()> {
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-9 * scale {
        return Err(Error::Validation(format!("{name} is not symmetric")));
    }
    if m.nrows() == 0 {
        return Ok(());
    }
    let min = m.clone().symmetric_eigenvalues().min();
    if min < -1e-9 * scale {
        return Err(Error::Validation(format!("{name} is not positive semidefinite (eigenvalue {min:e})")));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    /// row-major
    data: Vec<f64>,
}

pub(crate) mod matrix_json {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().iter().copied().collect(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DMatrix<f64>, D::Error> {
        let r = MatrixRepr::deserialize(d)?;
        if r.data.len() != r.rows * r.cols {
            return Err(serde::de::Error::custom("matrix data length mismatch"));
        }
        Ok(DMatrix::from_row_slice(r.rows, r.cols, &r.data))
    }
}

pub(crate) mod vector_json {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

mod opt_vectors_json {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<DVector<f64>>>, s: S) -> std::result::Result<S::Ok, S::Error> {
        v.as_ref()
            .map(|vs| vs.iter().map(|x| x.as_slice().to_vec()).collect::<Vec<_>>())
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<DVector<f64>>>, D::Error> {
        Ok(Option::<Vec<Vec<f64>>>::deserialize(d)?.map(|vs| vs.into_iter().map(DVector::from_vec).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn rejects_inconsistent_shapes() {
        let err = StateSpaceModel::new(
            DMatrix::zeros(2, 1),
            scalar(1.0),
            scalar(0.5),
            scalar(1.0),
            scalar(1.0),
            DVector::zeros(1),
            scalar(1.0),
        );
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn rejects_negative_variance() {
        let err = StateSpaceModel::new(
            scalar(1.0),
            scalar(-1.0),
            scalar(0.5),
            scalar(1.0),
            scalar(1.0),
            DVector::zeros(1),
            scalar(1.0),
        );
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn json_is_row_major_and_round_trips() {
        let mut m = StateSpaceModel::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 2.0]),
            scalar(1.0),
            DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        m.state_intercepts = Some(vec![DVector::zeros(2); 3]);
        let json = serde_json::to_value(&m).unwrap();
        assert_eq!(json["t"]["data"], serde_json::json!([0.5, 0.1, 0.0, 0.3]));
        let back: StateSpaceModel = serde_json::from_value(json).unwrap();
        assert_eq!(back, m);
    }
}
