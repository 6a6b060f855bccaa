//! Keyword and stop-word rules that turn chat text and UI events into
//! user actions.

use crate::error::{Result, ServeError};
use searchassist_core::domain::{AgentAction, UserAction};
use serde::{Deserialize, Serialize};

const STOP_WORDS: &[&str] = &[
    "a", "about", "all", "also", "am", "an", "and", "any", "are", "at", "be", "can", "could", "do", "does", "find",
    "for", "get", "give", "going", "have", "here", "how", "i", "image", "images", "in", "is", "it", "just", "let",
    "like", "look", "looking", "me", "my", "need", "of", "on", "or", "photo", "photos", "picture", "pictures",
    "please", "show", "so", "some", "that", "the", "them", "there", "these", "this", "those", "to", "us", "use",
    "want", "we", "what", "will", "with", "would", "you", "your",
];
const AFFIRMATIONS: &[&str] = &["yes", "yeah", "yep", "sure", "ok", "okay", "please", "definitely"];
const NEGATIONS: &[&str] = &["no", "nope", "nah", "not"];
const FAREWELLS: &[&str] = &["bye", "goodbye", "farewell", "quit", "exit"];
const GREETINGS: &[&str] = &["hello", "hi", "hey", "greetings", "good", "morning", "afternoon", "evening"];
const POLITE: &[&str] = &["thanks", "thank", "cheers"];
const MORE: &[&str] = &["more", "next", "another", "other", "others"];

/// What the user did on one turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedInput {
    pub user_action: UserAction,
    /// Present exactly for actions that carry a query.
    pub query: Option<Vec<String>>,
    /// The clicked label, present exactly for category clicks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl ParsedInput {
    pub fn new(user_action: UserAction, query: Option<Vec<String>>) -> Result<Self> {
        if user_action.carries_query() != query.is_some() {
            return Err(ServeError::BadInput(format!("{user_action} and query presence disagree")));
        }
        if query.as_ref().is_some_and(|q| q.is_empty()) {
            return Err(ServeError::BadInput("query is empty".into()));
        }
        Ok(Self { user_action, query, category: None })
    }

    fn plain(user_action: UserAction) -> Self {
        Self { user_action, query: None, category: None }
    }

    fn with_query(mut self, query: Vec<String>) -> Self {
        self.query = Some(query);
        self
    }
}

/// Either a greeting, which opens the conversation without a search
/// intent, or a user action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parsed {
    Greeting,
    Input(ParsedInput),
}

/// Structured events raised by the results pane.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum UiEvent {
    ClickResult {
        asset_id: String,
    },
    AddToCart {
        asset_id: String,
    },
    CategoryClick {
        category: String,
    },
    /// `tags` are the dragged asset's tags, resolved by the caller.
    DragSimilar {
        asset_id: String,
        tags: Vec<String>,
    },
    Download {
        asset_id: Option<String>,
    },
}

/// The slice of a session the parser may look at.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParseContext<'a> {
    /// Issued queries, oldest first.
    pub queries: &'a [Vec<String>],
    pub last_agent: Option<AgentAction>,
}

impl ParseContext<'_> {
    fn current_query(&self) -> Option<&[String]> {
        self.queries.last().map(Vec::as_slice)
    }

    fn knows(&self, token: &str) -> bool {
        self.queries.iter().flatten().any(|t| t == token)
    }
}

/// Lowercased alphanumeric words in order of appearance.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase).collect()
}

fn is_function_word(w: &str) -> bool {
    [STOP_WORDS, AFFIRMATIONS, NEGATIONS, POLITE, MORE].iter().any(|list| list.contains(&w))
}

/// Words left once stop words and conversational markers are removed,
/// deduplicated in order.
pub fn content_tokens(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for w in words(text) {
        if !is_function_word(&w) && !out.contains(&w) {
            out.push(w);
        }
    }
    out
}

fn merge(base: &[String], extra: &[String]) -> Vec<String> {
    let mut q = base.to_vec();
    for t in extra {
        if !q.contains(t) {
            q.push(t.clone());
        }
    }
    q
}

/// Classifies a chat message. Deterministic in `(text, ctx)`.
pub fn parse_message(text: &str, ctx: &ParseContext<'_>) -> Result<Parsed> {
    let all = words(text);
    if all.is_empty() {
        return Err(ServeError::BadInput("message is empty".into()));
    }
    if all.iter().any(|w| FAREWELLS.contains(&w.as_str())) {
        return Ok(Parsed::Input(ParsedInput::plain(UserAction::EndConversation)));
    }
    if all.iter().all(|w| GREETINGS.contains(&w.as_str()) || POLITE.contains(&w.as_str())) {
        return Ok(if all.iter().any(|w| GREETINGS.contains(&w.as_str())) {
            Parsed::Greeting
        } else {
            Parsed::Input(ParsedInput::plain(UserAction::EndConversation))
        });
    }

    let content: Vec<String> = content_tokens(text).into_iter().filter(|w| !GREETINGS.contains(&w.as_str())).collect();
    if content.is_empty() {
        return content_free(&all, ctx).map(Parsed::Input);
    }

    let current = ctx.current_query();
    let overlaps = content.iter().any(|t| ctx.knows(t));
    let answering_probe = ctx.last_agent.is_some_and(AgentAction::is_probe);
    let input = match current {
        Some(q) if overlaps || answering_probe => {
            ParsedInput::plain(UserAction::RefineQuery).with_query(merge(q, &content))
        }
        _ => ParsedInput::plain(UserAction::NewQuery).with_query(content),
    };
    Ok(Parsed::Input(input))
}

/// Messages made only of markers: "show more", "yes", "no".
fn content_free(all: &[String], ctx: &ParseContext<'_>) -> Result<ParsedInput> {
    let has = |list: &[&str]| all.iter().any(|w| list.contains(&w.as_str()));
    let affirmed = has(AFFIRMATIONS) && !has(NEGATIONS);
    if affirmed {
        match ctx.last_agent {
            Some(AgentAction::AddToCartPrompt) => return Ok(ParsedInput::plain(UserAction::AddToCart)),
            Some(AgentAction::AskToDownload | AgentAction::AskToPurchase | AgentAction::ProvideDiscount) => {
                return Ok(ParsedInput::plain(UserAction::DownloadOrPurchase));
            }
            _ => {}
        }
    }
    if ctx.current_query().is_none() {
        return Err(ServeError::BadInput("nothing to search for yet; describe what you are looking for".into()));
    }
    // A refusal, a bare "more" or an affirmation without a concrete target
    // all keep the user browsing the current query.
    Ok(ParsedInput::plain(UserAction::RequestMore))
}

/// Maps a results-pane event to a user action.
pub fn parse_event(event: &UiEvent) -> Result<ParsedInput> {
    Ok(match event {
        UiEvent::ClickResult { .. } => ParsedInput::plain(UserAction::ClickResult),
        UiEvent::AddToCart { .. } => ParsedInput::plain(UserAction::AddToCart),
        UiEvent::Download { .. } => ParsedInput::plain(UserAction::DownloadOrPurchase),
        UiEvent::CategoryClick { category } => {
            let label = words(category).join(" ");
            if label.is_empty() {
                return Err(ServeError::BadInput("category is empty".into()));
            }
            ParsedInput { category: Some(label), ..ParsedInput::plain(UserAction::ClusterCategoryClick) }
        }
        UiEvent::DragSimilar { tags, .. } => {
            if tags.is_empty() {
                return Err(ServeError::BadInput("dragged asset has no tags".into()));
            }
            ParsedInput::plain(UserAction::SearchSimilar).with_query(tags.clone())
        }
    })
}
