use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular input: {0}")]
    Singular(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("scale error: {0}")]
    Scale(String),
    #[error("incompatible regime and mode: {0}")]
    Incompatible(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        domain(format!("{name} = {p} must lie in [0, 1]"))
    }
}

pub(crate) fn check_open_unit(name: &str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        domain(format!("{name} = {p} must lie in (0, 1)"))
    }
}
