//! Flat text serialization for model states.
//!
//! ```text
//! wasserfair-model 1
//! kind linear
//! param use_bias true
//! block encoder 3 2
//! 1.0000000000000000e0 -2.5000000000000000e-1
//! ...
//! end
//! ```
//!
//! Values are written row-major with 17 significant digits, so a write/read
//! cycle is exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linear_models::{ClassifierState, CriticState, EncoderState, MlpAutoencoder, Representation};

const MAGIC: &str = "wasserfair-model 1";

/// Generic container: a kind tag, scalar parameters and named matrices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelFile {
    pub kind: String,
    pub params: BTreeMap<String, String>,
    pub blocks: Vec<(String, Array2<f64>)>,
}

impl ModelFile {
    pub fn new(kind: &str) -> Self {
        ModelFile {
            kind: kind.to_string(),
            ..Default::default()
        }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn matrix(mut self, name: &str, m: &Array2<f64>) -> Self {
        self.blocks.push((name.to_string(), m.clone()));
        self
    }

    pub fn vector(self, name: &str, v: &Array1<f64>) -> Self {
        let m = v.clone().insert_axis(ndarray::Axis(0));
        self.matrix(name, &m)
    }

    pub fn get_matrix(&self, name: &str) -> Result<Array2<f64>> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m.clone())
            .ok_or_else(|| Error::Parse(format!("missing block `{name}`")))
    }

    pub fn get_vector(&self, name: &str) -> Result<Array1<f64>> {
        let m = self.get_matrix(name)?;
        if m.nrows() != 1 {
            return Err(Error::Parse(format!("block `{name}` is not a row vector")));
        }
        Ok(m.row(0).to_owned())
    }

    pub fn get_param<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .params
            .get(key)
            .ok_or_else(|| Error::Parse(format!("missing param `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::Parse(format!("param `{key}` has invalid value `{raw}`")))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{MAGIC}").unwrap();
        writeln!(out, "kind {}", self.kind).unwrap();
        for (k, v) in &self.params {
            writeln!(out, "param {k} {v}").unwrap();
        }
        for (name, m) in &self.blocks {
            writeln!(out, "block {name} {} {}", m.nrows(), m.ncols()).unwrap();
            for row in m.rows() {
                let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
                writeln!(out, "{}", line.join(" ")).unwrap();
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        match lines.next() {
            Some((_, l)) if l == MAGIC => {}
            _ => return Err(Error::Parse(format!("missing `{MAGIC}` header"))),
        }
        let mut file = ModelFile::default();
        let mut ended = false;
        while let Some((no, line)) = lines.next() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("kind") => file.kind = parts.collect::<Vec<_>>().join(" "),
                Some("param") => {
                    let key = parts
                        .next()
                        .ok_or_else(|| Error::Parse(format!("line {no}: param without key")))?;
                    file.params
                        .insert(key.to_string(), parts.collect::<Vec<_>>().join(" "));
                }
                Some("block") => {
                    let fields: Vec<&str> = parts.collect();
                    let [name, rows, cols] = fields[..] else {
                        return Err(Error::Parse(format!("line {no}: malformed block header")));
                    };
                    let dim = |s: &str| {
                        s.parse::<usize>()
                            .map_err(|_| Error::Parse(format!("line {no}: bad dimension `{s}`")))
                    };
                    let (rows, cols) = (dim(rows)?, dim(cols)?);
                    let mut values = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        let (rno, row) = lines
                            .next()
                            .ok_or_else(|| Error::Parse(format!("block `{name}` truncated")))?;
                        let before = values.len();
                        for tok in row.split_whitespace() {
                            values.push(tok.parse::<f64>().map_err(|_| {
                                Error::Parse(format!("line {rno}: bad number `{tok}`"))
                            })?);
                        }
                        if values.len() - before != cols {
                            return Err(Error::Parse(format!(
                                "line {rno}: expected {cols} values in block `{name}`"
                            )));
                        }
                    }
                    let m = Array2::from_shape_vec((rows, cols), values).expect("counted");
                    file.blocks.push((name.to_string(), m));
                }
                Some("end") => {
                    ended = true;
                    break;
                }
                Some(other) => {
                    return Err(Error::Parse(format!("line {no}: unexpected `{other}`")));
                }
                None => {}
            }
        }
        if !ended {
            return Err(Error::Parse("missing `end` marker".into()));
        }
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

fn expect_kind(file: &ModelFile, kind: &str) -> Result<()> {
    if file.kind != kind {
        return Err(Error::Parse(format!(
            "expected a `{kind}` model, found `{}`",
            file.kind
        )));
    }
    Ok(())
}

impl From<&EncoderState> for ModelFile {
    fn from(e: &EncoderState) -> Self {
        ModelFile::new("linear")
            .param("use_bias", e.use_bias)
            .matrix("encoder", &e.encoder)
            .matrix("decoder", &e.decoder)
            .vector("enc_bias", &e.enc_bias)
            .vector("dec_bias", &e.dec_bias)
    }
}

impl TryFrom<&ModelFile> for EncoderState {
    type Error = Error;
    fn try_from(f: &ModelFile) -> Result<Self> {
        expect_kind(f, "linear")?;
        EncoderState::from_parts(
            f.get_matrix("encoder")?,
            f.get_matrix("decoder")?,
            f.get_vector("enc_bias")?,
            f.get_vector("dec_bias")?,
            f.get_param("use_bias")?,
        )
    }
}

impl From<&MlpAutoencoder> for ModelFile {
    fn from(e: &MlpAutoencoder) -> Self {
        ModelFile::new("mlp")
            .matrix("enc_hidden", &e.enc_hidden)
            .vector("enc_hidden_bias", &e.enc_hidden_bias)
            .matrix("enc_out", &e.enc_out)
            .vector("enc_out_bias", &e.enc_out_bias)
            .matrix("dec_hidden", &e.dec_hidden)
            .vector("dec_hidden_bias", &e.dec_hidden_bias)
            .matrix("dec_out", &e.dec_out)
            .vector("dec_out_bias", &e.dec_out_bias)
    }
}

impl TryFrom<&ModelFile> for MlpAutoencoder {
    type Error = Error;
    fn try_from(f: &ModelFile) -> Result<Self> {
        expect_kind(f, "mlp")?;
        let e = MlpAutoencoder {
            enc_hidden: f.get_matrix("enc_hidden")?,
            enc_hidden_bias: f.get_vector("enc_hidden_bias")?,
            enc_out: f.get_matrix("enc_out")?,
            enc_out_bias: f.get_vector("enc_out_bias")?,
            dec_hidden: f.get_matrix("dec_hidden")?,
            dec_hidden_bias: f.get_vector("dec_hidden_bias")?,
            dec_out: f.get_matrix("dec_out")?,
            dec_out_bias: f.get_vector("dec_out_bias")?,
        };
        let (m, h) = e.enc_hidden.dim();
        let d = e.enc_out.ncols();
        let consistent = e.enc_hidden_bias.len() == h
            && e.enc_out.nrows() == h
            && e.enc_out_bias.len() == d
            && e.dec_hidden.dim() == (d, h)
            && e.dec_hidden_bias.len() == h
            && e.dec_out.dim() == (h, m)
            && e.dec_out_bias.len() == m;
        if !consistent {
            return Err(Error::Dimension("inconsistent mlp layer shapes".into()));
        }
        Ok(e)
    }
}

impl From<&Representation> for ModelFile {
    fn from(r: &Representation) -> Self {
        match r {
            Representation::Linear(e) => e.into(),
            Representation::Mlp(e) => e.into(),
        }
    }
}

impl TryFrom<&ModelFile> for Representation {
    type Error = Error;
    fn try_from(f: &ModelFile) -> Result<Self> {
        match f.kind.as_str() {
            "linear" => Ok(Representation::Linear(f.try_into()?)),
            "mlp" => Ok(Representation::Mlp(f.try_into()?)),
            other => Err(Error::Parse(format!("`{other}` is not a representation model"))),
        }
    }
}

impl From<&CriticState> for ModelFile {
    fn from(c: &CriticState) -> Self {
        ModelFile::new("critic")
            .param("clip", format!("{:.16e}", c.clip))
            .vector("weights", &c.weights)
    }
}

impl TryFrom<&ModelFile> for CriticState {
    type Error = Error;
    fn try_from(f: &ModelFile) -> Result<Self> {
        expect_kind(f, "critic")?;
        Ok(CriticState {
            weights: f.get_vector("weights")?,
            clip: f.get_param("clip")?,
        })
    }
}

impl From<&ClassifierState> for ModelFile {
    fn from(c: &ClassifierState) -> Self {
        ModelFile::new("classifier")
            .param("bias", format!("{:.16e}", c.bias))
            .param("lambda", format!("{:.16e}", c.lambda))
            .vector("weights", &c.weights)
    }
}

impl TryFrom<&ModelFile> for ClassifierState {
    type Error = Error;
    fn try_from(f: &ModelFile) -> Result<Self> {
        expect_kind(f, "classifier")?;
        Ok(ClassifierState {
            weights: f.get_vector("weights")?,
            bias: f.get_param("bias")?,
            lambda: f.get_param("lambda")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn encoder_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut e = EncoderState::init(5, 3, true, &mut rng).unwrap();
        e.enc_bias[1] = 1.0 / 3.0;
        e.dec_bias[4] = -std::f64::consts::PI * 1e-300;
        let text = ModelFile::from(&e).to_text();
        let back = EncoderState::try_from(&ModelFile::parse(&text).unwrap()).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn mlp_and_critic_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mlp = MlpAutoencoder::init(6, 4, &mut rng).unwrap();
        let rep = Representation::Mlp(mlp);
        let back = Representation::try_from(&ModelFile::parse(&ModelFile::from(&rep).to_text()).unwrap());
        assert_eq!(back.unwrap(), rep);

        let critic = CriticState {
            weights: Array1::from_shape_simple_fn(4, || rng.random_range(-0.1..0.1)),
            clip: 0.1,
        };
        let back = CriticState::try_from(&ModelFile::parse(&ModelFile::from(&critic).to_text()).unwrap());
        assert_eq!(back.unwrap(), critic);
    }

    #[test]
    fn classifier_round_trip() {
        let c = ClassifierState {
            weights: Array1::from(vec![0.1, -2e-17, 3.5]),
            bias: -0.7,
            lambda: 1.0 / 31_000.0,
        };
        let back = ClassifierState::try_from(&ModelFile::parse(&ModelFile::from(&c).to_text()).unwrap());
        assert_eq!(back.unwrap(), c);
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let c = CriticState::new(2, 0.1);
        let f = ModelFile::parse(&ModelFile::from(&c).to_text()).unwrap();
        assert!(EncoderState::try_from(&f).is_err());
    }

    #[test]
    fn truncated_file_is_rejected() {
        let text = ModelFile::from(&EncoderState::identity(3)).to_text();
        let cut = &text[..text.len() / 2];
        assert!(matches!(ModelFile::parse(cut), Err(Error::Parse(_))));
        assert!(ModelFile::parse("garbage\n").is_err());
    }
}
