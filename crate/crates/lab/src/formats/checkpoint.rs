use std::collections::BTreeMap;
use std::path::Path;

use ganmpc::env::Task;
use ganmpc::ganmpc::{Discriminator, ModelConfig, TrainState};
use ganmpc::models::{BcPolicy, DynamicsModel, NextStatePredictor, Normalizer, StateModel};
use ganmpc::mpc::{CostModel, PlanModels};
use serde::{Deserialize, Serialize};

use super::{decode, decode_all, encode, encode_all, read_json, write_json, NetworkDoc, RecurrentDoc};
use crate::error::{LabError, Result};

pub const CHECKPOINT_FORMAT: &str = "ganmpc-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Dynamics,
    Predictor,
    Bc,
    CostLive,
    CostDeployed,
    Discriminator,
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::Dynamics,
        Role::Predictor,
        Role::Bc,
        Role::CostLive,
        Role::CostDeployed,
        Role::Discriminator,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            Role::Dynamics => "dynamics.json",
            Role::Predictor => "predictor.json",
            Role::Bc => "bc.json",
            Role::CostLive => "cost_live.json",
            Role::CostDeployed => "cost_deployed.json",
            Role::Discriminator => "discriminator.json",
        }
    }
}

/// Input standardization and, for state models, the output affine map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizerDoc {
    pub input_mean: Vec<String>,
    pub input_std: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub output_scale: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub output_offset: Vec<String>,
}

impl NormalizerDoc {
    fn input(&self) -> Result<Normalizer> {
        Ok(Normalizer {
            mean: decode_all(&self.input_mean)?,
            std: decode_all(&self.input_std)?,
        })
    }
}

/// One model of a checkpoint: parameters plus the metadata needed to use
/// them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointDoc {
    pub format: String,
    pub version: u32,
    pub role: Role,
    /// Hash of the imitator environment the run trained on.
    pub env_spec_hash: String,
    pub iteration: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalizer: Option<NormalizerDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recurrent: Option<RecurrentDoc>,
    /// Scalars specific to the role, as decimal strings.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

impl CheckpointDoc {
    fn new(role: Role, env_spec_hash: &str, iteration: usize) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            role,
            env_spec_hash: env_spec_hash.into(),
            iteration,
            normalizer: None,
            network: None,
            recurrent: None,
            extra: BTreeMap::new(),
        }
    }

    fn state_model(role: Role, m: &StateModel, env: &str, it: usize) -> Result<Self> {
        let mut d = Self::new(role, env, it);
        d.network = Some(NetworkDoc::new(m.net().spec(), m.net().params())?);
        d.normalizer = Some(NormalizerDoc {
            input_mean: encode_all(&m.input_normalizer().mean),
            input_std: encode_all(&m.input_normalizer().std),
            output_scale: encode_all(m.output_scale()),
            output_offset: encode_all(m.output_offset()),
        });
        Ok(d)
    }

    fn cost(role: Role, c: &CostModel, env: &str, it: usize) -> Result<Self> {
        let mut d = Self::new(role, env, it);
        d.network = Some(NetworkDoc::new(c.net().spec(), c.net().params())?);
        let (e, l) = c.logits();
        d.extra.insert("control_weight".into(), encode(c.control_weight()));
        d.extra.insert("engineered_logit".into(), encode(e));
        d.extra.insert("learned_logit".into(), encode(l));
        Ok(d)
    }

    fn extra(&self, key: &str) -> Result<f64> {
        let v = self
            .extra
            .get(key)
            .ok_or_else(|| LabError::Format(format!("{:?} checkpoint lacks `{key}`", self.role)))?;
        decode(v)
    }

    fn network(&self) -> Result<&NetworkDoc> {
        self.network
            .as_ref()
            .ok_or_else(|| LabError::Format(format!("{:?} checkpoint lacks a network", self.role)))
    }

    fn normalizer(&self) -> Result<&NormalizerDoc> {
        self.normalizer
            .as_ref()
            .ok_or_else(|| LabError::Format(format!("{:?} checkpoint lacks normalizer constants", self.role)))
    }

    fn restore_state_model(&self, m: &mut StateModel) -> Result<()> {
        let net = self.network()?;
        if &net.spec != m.net().spec() {
            return Err(LabError::Mismatch(format!("{:?} architecture differs from the configuration", self.role)));
        }
        m.net_mut().set_params(net.params()?)?;
        let n = self.normalizer()?;
        m.set_normalizers(n.input()?, decode_all(&n.output_scale)?, decode_all(&n.output_offset)?)?;
        Ok(())
    }

    fn restore_cost(&self, c: &mut CostModel) -> Result<()> {
        let net = self.network()?;
        if &net.spec != c.net().spec() {
            return Err(LabError::Mismatch(format!("{:?} architecture differs from the configuration", self.role)));
        }
        let mut p = net.params()?.into_vec();
        p.push(self.extra("engineered_logit")?);
        p.push(self.extra("learned_logit")?);
        c.set_gen_params(&p)?;
        c.set_control_weight(self.extra("control_weight")?)?;
        Ok(())
    }
}

/// The models of one checkpoint directory.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub iteration: usize,
    pub dynamics: DynamicsModel,
    pub predictor: NextStatePredictor,
    pub bc: BcPolicy,
    pub cost_live: CostModel,
    pub cost_deployed: CostModel,
    pub discriminator: Option<Discriminator>,
}

impl Checkpoint {
    pub fn from_state(state: &TrainState) -> Self {
        Self {
            iteration: state.iteration,
            dynamics: state.dynamics.clone(),
            predictor: state.predictor.clone(),
            bc: state.bc.clone(),
            cost_live: state.cost_live.clone(),
            cost_deployed: state.cost_deployed.clone(),
            discriminator: state.discriminator.clone(),
        }
    }

    pub fn deployed(&self) -> PlanModels<'_> {
        PlanModels {
            dynamics: &self.dynamics,
            cost: &self.cost_deployed,
            bc: &self.bc,
            predictor: &self.predictor,
        }
    }

    pub fn docs(&self, env_spec_hash: &str) -> Result<Vec<CheckpointDoc>> {
        let it = self.iteration;
        let mut docs = vec![
            CheckpointDoc::state_model(Role::Dynamics, &self.dynamics, env_spec_hash, it)?,
            CheckpointDoc::state_model(Role::Predictor, &self.predictor, env_spec_hash, it)?,
        ];
        let mut bc = CheckpointDoc::new(Role::Bc, env_spec_hash, it);
        bc.network = Some(NetworkDoc::new(self.bc.net().spec(), self.bc.net().params())?);
        bc.normalizer = Some(NormalizerDoc {
            input_mean: encode_all(&self.bc.input_normalizer().mean),
            input_std: encode_all(&self.bc.input_normalizer().std),
            output_scale: Vec::new(),
            output_offset: Vec::new(),
        });
        bc.extra.insert("action_bound".into(), encode(self.bc.action_bound()));
        docs.push(bc);
        docs.push(CheckpointDoc::cost(Role::CostLive, &self.cost_live, env_spec_hash, it)?);
        docs.push(CheckpointDoc::cost(Role::CostDeployed, &self.cost_deployed, env_spec_hash, it)?);
        if let Some(d) = &self.discriminator {
            let mut doc = CheckpointDoc::new(Role::Discriminator, env_spec_hash, it);
            doc.recurrent = Some(RecurrentDoc::new(&d.encoder, &d.params)?);
            docs.push(doc);
        }
        Ok(docs)
    }

    pub fn save(&self, dir: &Path, env_spec_hash: &str) -> Result<()> {
        for doc in self.docs(env_spec_hash)? {
            write_json(&dir.join(doc.role.file_name()), &doc)?;
        }
        Ok(())
    }

    /// Rebuilds the models of `dir`, checking every document against the
    /// expected environment hash and the configured architectures.
    pub fn load(dir: &Path, task: Task, models: &ModelConfig, env_spec_hash: &str) -> Result<Self> {
        let read = |role: Role| -> Result<Option<CheckpointDoc>> {
            let path = dir.join(role.file_name());
            if role == Role::Discriminator && !path.exists() {
                return Ok(None);
            }
            let doc: CheckpointDoc = read_json(&path)?;
            if doc.format != CHECKPOINT_FORMAT || doc.version != CHECKPOINT_VERSION {
                return Err(LabError::Format(format!("{}: unsupported checkpoint format", path.display())));
            }
            if doc.role != role {
                return Err(LabError::Format(format!("{}: holds a {:?} model", path.display(), doc.role)));
            }
            if doc.env_spec_hash != env_spec_hash {
                return Err(LabError::Mismatch(format!(
                    "{}: trained for environment {}, configuration describes {}",
                    path.display(),
                    doc.env_spec_hash,
                    env_spec_hash
                )));
            }
            Ok(Some(doc))
        };
        let doc = |role| read(role).map(|d| d.expect("required role"));

        let d = doc(Role::Dynamics)?;
        let iteration = d.iteration;
        let mut dynamics = DynamicsModel::new(task, models.dynamics_spec(task)?, 0)?;
        d.restore_state_model(&mut dynamics)?;

        let mut predictor = NextStatePredictor::new(task, models.predictor_spec(task)?, 0)?;
        doc(Role::Predictor)?.restore_state_model(&mut predictor)?;

        let d = doc(Role::Bc)?;
        let net = d.network()?;
        let mut bc = BcPolicy::with_params(net.spec.clone(), net.params()?, d.extra("action_bound")?)?;
        if net.spec != models.bc_spec(task)? {
            return Err(LabError::Mismatch("Bc architecture differs from the configuration".into()));
        }
        bc.set_input_normalizer(d.normalizer()?.input()?)?;

        let n = task.state_dim();
        let mut cost_live = CostModel::new(&models.cost, n, 0)?;
        doc(Role::CostLive)?.restore_cost(&mut cost_live)?;
        let mut cost_deployed = CostModel::new(&models.cost, n, 0)?;
        doc(Role::CostDeployed)?.restore_cost(&mut cost_deployed)?;

        let discriminator = match read(Role::Discriminator)? {
            Some(d) => {
                let (encoder, params) = d
                    .recurrent
                    .as_ref()
                    .ok_or_else(|| LabError::Format("discriminator checkpoint lacks its encoder".into()))?
                    .encoder()?;
                Some(Discriminator { encoder, params })
            }
            None => None,
        };
        Ok(Self {
            iteration,
            dynamics,
            predictor,
            bc,
            cost_live,
            cost_deployed,
            discriminator,
        })
    }
}
