use std::path::Path;

use crate::error::{Result, ServeError};
use searchassist_core::a3c::encode;
use searchassist_core::domain::{AgentAction, Encoding, SearchState};
use searchassist_core::neural::{forward_step, load_checkpoint, HiddenState, PolicyParams};
use searchassist_core::qagent::{argmax, q_from_json, state_key, DiscreteStateKey, QTable};

/// A trained policy, immutable once loaded.
#[derive(Debug, Clone)]
pub enum Model {
    Lstm { params: PolicyParams, encoding: Encoding },
    Q { table: QTable<DiscreteStateKey> },
}

/// One argmax decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    pub action: AgentAction,
    pub hidden: HiddenState,
    pub probs: Option<Vec<f64>>,
}

impl Model {
    /// Loads an LSTM checkpoint directory. With `expected_hidden`, a
    /// different hidden size in the manifest is a mismatch.
    pub fn load_lstm(dir: &Path, expected_hidden: Option<usize>) -> Result<Self> {
        let (params, manifest) = load_checkpoint(dir)?;
        if let Some(h) = expected_hidden {
            if h != manifest.hidden_size {
                return Err(ServeError::ModelMismatch(format!(
                    "requested hidden size {h}, checkpoint has {}",
                    manifest.hidden_size
                )));
            }
        }
        Ok(Model::Lstm { params, encoding: manifest.encoding })
    }

    pub fn load_q(path: &Path) -> Result<Self> {
        let (table, _) = q_from_json(&std::fs::read_to_string(path)?)?;
        Ok(Model::Q { table })
    }

    /// Width of the recurrent state sessions must carry; 0 for tabular models.
    pub fn hidden_size(&self) -> usize {
        match self {
            Model::Lstm { params, .. } => params.hidden_size(),
            Model::Q { .. } => 0,
        }
    }

    pub fn version(&self) -> String {
        match self {
            Model::Lstm { params, .. } => format!("lstm-h{}-{:016x}", params.hidden_size(), params.checksum()),
            Model::Q { table } => format!("q-{}", table.len()),
        }
    }

    /// Greedy action for `state`, advancing `hidden` for recurrent models.
    pub fn act(&self, state: &SearchState, hidden: &HiddenState) -> Result<Choice> {
        if hidden.size() != self.hidden_size() {
            return Err(ServeError::ModelMismatch(format!(
                "session hidden size {} differs from model {}",
                hidden.size(),
                self.hidden_size()
            )));
        }
        match self {
            Model::Lstm { params, encoding } => {
                let x = encode(state, *encoding);
                let (next, _, out) = forward_step(params, &x, hidden)?;
                Ok(Choice {
                    action: AgentAction::ALL[argmax(&out.probs)],
                    hidden: next,
                    probs: Some(out.probs.to_vec()),
                })
            }
            Model::Q { table } => {
                Ok(Choice { action: table.greedy(&state_key(state)), hidden: hidden.clone(), probs: None })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use searchassist_core::domain::{UserAction, STATE_DIM};
    use searchassist_core::neural::save_checkpoint;

    fn params(hidden: usize) -> PolicyParams {
        PolicyParams::init(STATE_DIM, hidden, &mut rand::rngs::StdRng::seed_from_u64(3))
    }

    fn state() -> SearchState {
        let mut s = SearchState::default();
        s.push_user(UserAction::NewQuery);
        s.length_conv = 1;
        s
    }

    #[test]
    fn lstm_round_trip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = params(8);
        save_checkpoint(dir.path(), &p, Encoding::Full).unwrap();
        let m = Model::load_lstm(dir.path(), Some(8)).unwrap();
        assert_eq!(m.hidden_size(), 8);
        assert!(m.version().starts_with("lstm-h8-"));
        assert!(matches!(Model::load_lstm(dir.path(), Some(16)), Err(ServeError::ModelMismatch(_))));
        assert!(matches!(m.act(&state(), &HiddenState::zeros(4)), Err(ServeError::ModelMismatch(_))));
    }

    #[test]
    fn argmax_is_deterministic_and_advances_hidden() {
        let m = Model::Lstm { params: params(8), encoding: Encoding::Full };
        let h0 = HiddenState::zeros(8);
        let a = m.act(&state(), &h0).unwrap();
        let b = m.act(&state(), &h0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.hidden, h0);
        let probs = a.probs.unwrap();
        assert_eq!(AgentAction::ALL[argmax(&probs)], a.action);
    }

    #[test]
    fn q_model_is_greedy() {
        let mut table = QTable::new();
        table.set(state_key(&state()), AgentAction::AskFeedback, 2.0);
        let m = Model::Q { table };
        let c = m.act(&state(), &HiddenState::zeros(0)).unwrap();
        assert_eq!(c.action, AgentAction::AskFeedback);
        assert_eq!(m.hidden_size(), 0);
    }
}
