//! Turn handling: user input in, one agent response out.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServeError};
use crate::model::Model;
use crate::nlu::{parse_event, parse_message, Parsed, ParsedInput, UiEvent};
use crate::session::{now_ms, Session, SessionStore, SessionView};
use crate::templates;
use searchassist_core::domain::{AgentAction, UserAction};
use searchassist_core::search::{Catalog, ResultEntry, ResultPage, PAGE_SIZE};

const FAREWELL: &str = "Thank you for visiting, goodbye!";

/// The agent's reply as sent to the client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub action: AgentAction,
    pub utterance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results: Option<Vec<ResultEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

impl AgentResponse {
    /// Results accompany exactly the show-results action and categories
    /// exactly the cluster action.
    pub fn check(&self) -> std::result::Result<(), String> {
        if self.utterance.trim().is_empty() {
            return Err("empty utterance".into());
        }
        if self.results.is_some() != (self.action == AgentAction::ShowResults) {
            return Err(format!("results presence does not match {}", self.action));
        }
        if self.categories.is_some() != (self.action == AgentAction::ClusterCategories) {
            return Err(format!("categories presence does not match {}", self.action));
        }
        if let Some(r) = &self.results {
            if r.len() > PAGE_SIZE || r.iter().any(|e| !(0.0..=1.0).contains(&e.score)) {
                return Err("malformed result page".into());
            }
            if r.windows(2).any(|w| w[0].score < w[1].score) {
                return Err("results are not sorted by score".into());
            }
        }
        Ok(())
    }
}

/// Raw input for one turn.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Text(String),
    Event(UiEvent),
}

#[derive(Serialize)]
struct TraceLine<'a> {
    ts_ms: u64,
    session_id: &'a str,
    turn: u32,
    user_action: Option<UserAction>,
    agent_action: AgentAction,
    query: Option<&'a [String]>,
}

fn run_search(session: &mut Session, catalog: &Catalog) {
    let Some(query) = session.current_query().map(<[String]>::to_vec) else {
        session.page = None;
        session.state.score_results = [0.0; PAGE_SIZE];
        return;
    };
    let page = catalog.search(&query, session.offset).unwrap_or_else(|_| ResultPage {
        query: query.clone(),
        offset: session.offset,
        entries: vec![],
    });
    session.state.score_results = page.padded_scores();
    session.page = Some(page);
}

fn push_query(session: &mut Session, query: Vec<String>) {
    session.queries.push(query);
    session.offset = 0;
    session.categories.clear();
}

fn apply_user_action(session: &mut Session, input: &ParsedInput, catalog: &Catalog) {
    session.state.push_user(input.user_action);
    session.state.length_conv += 1;
    match input.user_action {
        UserAction::NewQuery | UserAction::RefineQuery | UserAction::SearchSimilar => {
            push_query(session, input.query.clone().expect("query-carrying action"));
            run_search(session, catalog);
        }
        UserAction::ClusterCategoryClick => {
            let label = input.category.as_deref().unwrap_or_default();
            let extra: Vec<String> = label.split_whitespace().map(str::to_string).collect();
            let mut query = session.current_query().map(<[String]>::to_vec).unwrap_or_default();
            for t in extra {
                if !query.contains(&t) {
                    query.push(t);
                }
            }
            if !query.is_empty() {
                push_query(session, query);
                run_search(session, catalog);
            }
        }
        UserAction::RequestMore => {
            session.offset += 1;
            run_search(session, catalog);
        }
        UserAction::DownloadOrPurchase => session.completed = true,
        UserAction::EndConversation => session.ended = true,
        UserAction::ClickResult | UserAction::AddToCart => {}
    }
}

/// Advances `session` by one turn and returns the agent's reply. Selection
/// is argmax, so the reply depends only on the session, the input and the
/// model.
pub fn handle_turn(session: &mut Session, input: &Parsed, model: &Model, catalog: &Catalog) -> Result<AgentResponse> {
    if session.ended {
        return Err(ServeError::SessionEnded(session.id.clone()));
    }
    if session.hidden.size() != model.hidden_size() {
        return Err(ServeError::ModelMismatch(format!(
            "session hidden size {} differs from model {}",
            session.hidden.size(),
            model.hidden_size()
        )));
    }
    let action = match input {
        Parsed::Greeting => AgentAction::Salutation,
        Parsed::Input(p) => {
            apply_user_action(session, p, catalog);
            if session.ended {
                session.updated_ms = now_ms();
                return Ok(AgentResponse {
                    action: AgentAction::Salutation,
                    utterance: FAREWELL.into(),
                    results: None,
                    categories: None,
                });
            }
            let choice = model.act(&session.state, &session.hidden)?;
            session.hidden = choice.hidden;
            choice.action
        }
    };

    let mut response = AgentResponse {
        action,
        utterance: templates::render(action, session.responses).to_string(),
        results: None,
        categories: None,
    };
    match action {
        AgentAction::ShowResults => {
            run_search(session, catalog);
            response.results = Some(session.page.as_ref().map(|p| p.entries.clone()).unwrap_or_default());
        }
        AgentAction::ClusterCategories => {
            run_search(session, catalog);
            let labels = match (&session.page, session.current_query()) {
                (Some(page), Some(q)) => catalog.cluster_categories(q, page).0,
                _ => Vec::new(),
            };
            session.categories = labels.clone();
            response.categories = Some(labels);
        }
        _ => {}
    }
    session.state.push_agent(action);
    session.responses += 1;
    session.updated_ms = now_ms();
    Ok(response)
}

/// A loaded model, catalog and session store.
pub struct Assistant {
    pub model: Model,
    pub catalog: Arc<Catalog>,
    pub store: SessionStore,
    trace: Option<Mutex<File>>,
}

impl Assistant {
    pub fn new(model: Model, catalog: Arc<Catalog>, store: SessionStore) -> Self {
        Self { model, catalog, store, trace: None }
    }

    /// Appends one JSON line per turn to `path`.
    pub fn with_trace(mut self, path: &Path) -> Result<Self> {
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        self.trace = Some(Mutex::new(file));
        Ok(self)
    }

    pub fn create_session(&self) -> Result<String> {
        self.store.create(self.model.hidden_size())
    }

    pub fn view(&self, id: &str) -> Result<SessionView> {
        Ok(self.store.get(id)?.lock().view())
    }

    pub fn delete(&self, id: &str) -> Result<()> {
        self.store.delete(id)
    }

    fn resolve(&self, session: &mut Session, message: Message) -> Result<Parsed> {
        let asset =
            |id: &str| self.catalog.get(id).ok_or_else(|| ServeError::BadInput(format!("unknown asset `{id}`")));
        match message {
            Message::Text(text) => parse_message(&text, &session.parse_context()),
            Message::Event(event) => {
                let event = match event {
                    UiEvent::ClickResult { asset_id } => {
                        asset(&asset_id)?;
                        UiEvent::ClickResult { asset_id }
                    }
                    UiEvent::AddToCart { asset_id } => {
                        asset(&asset_id)?;
                        session.cart.insert(asset_id.clone());
                        UiEvent::AddToCart { asset_id }
                    }
                    UiEvent::DragSimilar { asset_id, .. } => {
                        let tags = asset(&asset_id)?.tags.iter().cloned().collect();
                        UiEvent::DragSimilar { asset_id, tags }
                    }
                    UiEvent::Download { asset_id } => {
                        if let Some(id) = &asset_id {
                            asset(id)?;
                        }
                        UiEvent::Download { asset_id }
                    }
                    other => other,
                };
                parse_event(&event).map(Parsed::Input)
            }
        }
    }

    pub fn message(&self, id: &str, message: Message) -> Result<AgentResponse> {
        let handle = self.store.get(id)?;
        let mut session = handle.lock();
        // Work on a copy so a rejected turn leaves the session untouched.
        let mut next = session.clone();
        let parsed = self.resolve(&mut next, message)?;
        let response = handle_turn(&mut next, &parsed, &self.model, &self.catalog)?;
        self.store.record(&next)?;
        *session = next;
        if let Some(trace) = &self.trace {
            let user_action = match &parsed {
                Parsed::Input(p) => Some(p.user_action),
                Parsed::Greeting => None,
            };
            let line = TraceLine {
                ts_ms: session.updated_ms,
                session_id: &session.id,
                turn: session.state.length_conv,
                user_action,
                agent_action: response.action,
                query: session.current_query(),
            };
            let mut f = trace.lock();
            writeln!(f, "{}", serde_json::to_string(&line)?)?;
        }
        Ok(response)
    }
}
