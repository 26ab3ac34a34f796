//! Variational sequential labeler: `p(y_t|z_t) p(z_t|x_{t-1}, z_{t-1}) p(x_t|z_t)`
//! with `q(z_t | x_0..x_T)` from a bi-directional encoder and no separate
//! label posterior network (`q(y_t|z_t) = p(y_t|z_t)`).

use serde::{Deserialize, Serialize};

use super::{check_dim, gaussian_net, label_dist, label_net, TmcConfig, TransitionTerms};
use crate::autodiff::{Graph, Var};
use crate::distributions::{DiagGaussian, LabelDistribution};
use crate::error::{contract, Result};
use crate::nn::{BiRnnEncoder, Bound, Group, Mlp2, ParamSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VslNets {
    pub py: Mlp2,
    pub pz: Mlp2,
    pub px: Mlp2,
    pub encoder: BiRnnEncoder,
    pub qz: Mlp2,
}

impl VslNets {
    pub fn new(params: &mut ParamSet, cfg: &TmcConfig) -> Self {
        let (dz, dx) = (cfg.d_z, cfg.d_x);
        let gen = Group::Generative;
        let var = Group::Variational;
        Self {
            py: label_net(params, "psi_py", dz, cfg, gen),
            pz: gaussian_net(params, "psi_pz", dx + dz, dz, cfg, gen),
            px: gaussian_net(params, "psi_px", dz, dx, cfg, gen),
            encoder: BiRnnEncoder::new(params, "encoder", dx, cfg.rnn_state_dim, cfg.code_dim, var),
            qz: gaussian_net(params, "psi_qz", cfg.code_dim, dz, cfg, var),
        }
    }

    /// `N(0, I)` at t = 0, else `p(z_t | z_{t-1}, x_{t-1})` with `prev = (z_{t-1}, x_{t-1})`.
    pub fn prior_z(&self, g: &mut Graph, p: &Bound, cfg: &TmcConfig, prev: Option<(Var, Var)>) -> Result<DiagGaussian> {
        match prev {
            None => Ok(DiagGaussian::standard(g, cfg.d_z)),
            Some((z, x)) => {
                check_dim(g, z, cfg.d_z, "latent")?;
                check_dim(g, x, cfg.d_x, "observation")?;
                let input = g.concat(&[x, z]);
                let out = self.pz.forward(g, p, input)?;
                DiagGaussian::from_head(g, out, cfg.d_z)
            }
        }
    }

    /// `p(y_t | z_t)`, also used as the label posterior.
    pub fn label(&self, g: &mut Graph, p: &Bound, cfg: &TmcConfig, z: Var) -> Result<LabelDistribution> {
        check_dim(g, z, cfg.d_z, "latent")?;
        let out = self.py.forward(g, p, z)?;
        label_dist(g, out, cfg.classes)
    }

    /// `p(x_t | z_t)`; the label does not enter.
    pub fn emission(&self, g: &mut Graph, p: &Bound, cfg: &TmcConfig, z: Var) -> Result<DiagGaussian> {
        check_dim(g, z, cfg.d_z, "latent")?;
        let out = self.px.forward(g, p, z)?;
        DiagGaussian::from_head(g, out, cfg.d_x)
    }

    /// Generative log terms; `prev = (z_{t-1}, x_{t-1})`.
    pub fn transition(
        &self,
        g: &mut Graph,
        p: &Bound,
        cfg: &TmcConfig,
        prev: Option<(Var, Var)>,
        x: Var,
        y: Var,
        z: Var,
    ) -> Result<TransitionTerms> {
        check_dim(g, x, cfg.d_x, "observation")?;
        check_dim(g, y, cfg.classes, "label")?;
        let pz = self.prior_z(g, p, cfg, prev)?;
        let log_pz = pz.log_pdf(g, z)?;
        let py = self.label(g, p, cfg, z)?;
        let log_py = py.log_pmf(g, y)?;
        let px = self.emission(g, p, cfg, z)?;
        let log_px = px.log_pdf(g, x)?;
        Ok(TransitionTerms {
            log_py,
            log_pz: Some(log_pz),
            log_px,
            log_qy: None,
            log_qz: None,
        })
    }

    /// Per-step `q(z_t | x_0..x_T)`.
    pub fn variational(&self, g: &mut Graph, p: &Bound, cfg: &TmcConfig, xs: &[Var]) -> Result<Vec<DiagGaussian>> {
        if xs.is_empty() {
            return Err(contract("VSL posterior needs a non-empty sequence"));
        }
        for &x in xs {
            check_dim(g, x, cfg.d_x, "observation")?;
        }
        let codes = self.encoder.encode(g, p, xs)?;
        codes
            .into_iter()
            .map(|c| {
                let out = self.qz.forward(g, p, c)?;
                DiagGaussian::from_head(g, out, cfg.d_z)
            })
            .collect()
    }
}
