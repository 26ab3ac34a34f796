//! Semi-supervised variational RNN. The latent splits into a stochastic
//! `z'_t` and a deterministic `h_t = f(z'_t, y_t, x_t, h_{t-1})`:
//!
//! `p(y_t|h_{t-1}) p(z'_t|y_t, h_{t-1}) delta(h_t - f(..)) p(x_t|y_t, z'_t, h_{t-1})`
//!
//! The Dirac factor contributes no log-density term.

use serde::{Deserialize, Serialize};

use super::{check_dim, gaussian_net, label_dist, label_net, TmcConfig, TransitionTerms};
use crate::autodiff::{Graph, Var};
use crate::distributions::{DiagGaussian, LabelDistribution};
use crate::error::Result;
use crate::nn::{Bound, Group, Mlp2, ParamSet, RnnCell};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrnnNets {
    pub py: Mlp2,
    pub pz: Option<Mlp2>,
    pub px: Mlp2,
    pub rnn: RnnCell,
    pub qy: Mlp2,
    pub qz: Option<Mlp2>,
}

impl SvrnnNets {
    pub fn new(params: &mut ParamSet, cfg: &TmcConfig) -> Self {
        let (c, dz, dx, s) = (cfg.classes, cfg.d_z, cfg.d_x, cfg.rnn_state_dim);
        let gen = Group::Generative;
        let var = Group::Variational;
        Self {
            py: label_net(params, "psi_py", s, cfg, gen),
            pz: (dz > 0).then(|| gaussian_net(params, "psi_pz", c + s, dz, cfg, gen)),
            px: gaussian_net(params, "psi_px", c + dz + s, dx, cfg, gen),
            rnn: RnnCell::new(params, "f_theta", dz + c + dx, s, gen),
            qy: label_net(params, "psi_qy", dx + s, cfg, var),
            qz: (dz > 0).then(|| gaussian_net(params, "psi_qz", dx + c + s, dz, cfg, var)),
        }
    }

    pub fn initial_state(&self, g: &mut Graph, cfg: &TmcConfig) -> Var {
        g.constant(vec![0.0; cfg.rnn_state_dim])
    }

    /// `p(y_t | h_{t-1})`.
    pub fn prior_y(&self, g: &mut Graph, p: &Bound, cfg: &TmcConfig, h: Var) -> Result<LabelDistribution> {
        check_dim(g, h, cfg.rnn_state_dim, "recurrent state")?;
        let out = self.py.forward(g, p, h)?;
        label_dist(g, out, cfg.classes)
    }

    /// `p(z'_t | y_t, h_{t-1})`; `None` when `d_z = 0`.
    pub fn prior_z(&self, g: &mut Graph, p: &Bound, cfg: &TmcConfig, y: Var, h: Var) -> Result<Option<DiagGaussian>> {
        let Some(net) = &self.pz else { return Ok(None) };
        check_dim(g, y, cfg.classes, "label")?;
        let input = g.concat(&[y, h]);
        let out = net.forward(g, p, input)?;
        Ok(Some(DiagGaussian::from_head(g, out, cfg.d_z)?))
    }

    /// `p(x_t | y_t, z'_t, h_{t-1})`.
    pub fn emission(&self, g: &mut Graph, p: &Bound, cfg: &TmcConfig, y: Var, z: Var, h: Var) -> Result<DiagGaussian> {
        check_dim(g, y, cfg.classes, "label")?;
        check_dim(g, z, cfg.d_z, "latent")?;
        let input = g.concat(&[y, z, h]);
        let out = self.px.forward(g, p, input)?;
        DiagGaussian::from_head(g, out, cfg.d_x)
    }

    /// Deterministic `h_t = f(z'_t, y_t, x_t, h_{t-1})`.
    pub fn recur(&self, g: &mut Graph, p: &Bound, z: Var, y: Var, x: Var, h: Var) -> Result<Var> {
        let input = g.concat(&[z, y, x]);
        self.rnn.step(g, p, input, h)
    }

    /// The three stochastic log terms and the next deterministic state.
    pub fn transition(
        &self,
        g: &mut Graph,
        p: &Bound,
        cfg: &TmcConfig,
        h: Var,
        x: Var,
        y: Var,
        z: Var,
    ) -> Result<(TransitionTerms, Var)> {
        check_dim(g, x, cfg.d_x, "observation")?;
        let py = self.prior_y(g, p, cfg, h)?;
        let log_py = py.log_pmf(g, y)?;
        let log_pz = match self.prior_z(g, p, cfg, y, h)? {
            Some(pz) => Some(pz.log_pdf(g, z)?),
            None => {
                check_dim(g, z, 0, "latent")?;
                None
            }
        };
        let px = self.emission(g, p, cfg, y, z, h)?;
        let log_px = px.log_pdf(g, x)?;
        let h_next = self.recur(g, p, z, y, x, h)?;
        Ok((
            TransitionTerms {
                log_py,
                log_pz,
                log_px,
                log_qy: None,
                log_qz: None,
            },
            h_next,
        ))
    }

    /// `q(y_t | x_t, h_{t-1})`.
    pub fn q_y(&self, g: &mut Graph, p: &Bound, cfg: &TmcConfig, x: Var, h: Var) -> Result<LabelDistribution> {
        check_dim(g, x, cfg.d_x, "observation")?;
        check_dim(g, h, cfg.rnn_state_dim, "recurrent state")?;
        let input = g.concat(&[x, h]);
        let out = self.qy.forward(g, p, input)?;
        label_dist(g, out, cfg.classes)
    }

    /// `q(z'_t | x_t, y_t, h_{t-1})`.
    pub fn q_z(&self, g: &mut Graph, p: &Bound, cfg: &TmcConfig, x: Var, y: Var, h: Var) -> Result<Option<DiagGaussian>> {
        let Some(net) = &self.qz else { return Ok(None) };
        check_dim(g, y, cfg.classes, "label")?;
        let input = g.concat(&[x, y, h]);
        let out = net.forward(g, p, input)?;
        Ok(Some(DiagGaussian::from_head(g, out, cfg.d_z)?))
    }

    /// Variational step: `(q_z, q_y)` given the label to condition `q_z` on.
    pub fn variational_step(
        &self,
        g: &mut Graph,
        p: &Bound,
        cfg: &TmcConfig,
        x: Var,
        y: Var,
        h: Var,
    ) -> Result<(Option<DiagGaussian>, LabelDistribution)> {
        let q_y = self.q_y(g, p, cfg, x, h)?;
        let q_z = self.q_z(g, p, cfg, x, y, h)?;
        Ok((q_z, q_y))
    }
}
