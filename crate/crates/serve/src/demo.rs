//! A small car catalog and a scripted conversation over it, for demos and
//! end-to-end tests.

use crate::http::MessageBody;
use searchassist_core::search::{Asset, Catalog};

pub fn car_catalog() -> Catalog {
    let rows: &[(&str, &[&str])] = &[
        ("car-001", &["cars", "city", "urban"]),
        ("car-002", &["cars", "city", "traffic"]),
        ("car-003", &["cars", "city", "wrecked"]),
        ("car-004", &["cars", "city", "urban", "night"]),
        ("car-005", &["cars", "sporty", "racing"]),
        ("car-006", &["cars", "sporty", "red"]),
        ("car-007", &["cars", "expensive", "luxury"]),
        ("car-008", &["cars", "sedan", "family"]),
        ("car-009", &["cars", "racing", "track", "competition"]),
        ("car-010", &["cars", "racing", "urban"]),
        ("car-011", &["cars", "city", "sedan"]),
        ("car-012", &["cars", "expensive", "sporty"]),
        ("bike-001", &["bikes", "mountain"]),
        ("cpu-001", &["cpu", "computer", "mac"]),
    ];
    Catalog::load(rows.iter().map(|(id, tags)| Asset::new(*id, tags.iter()))).expect("demo catalog is valid")
}

/// User turns of a scripted shopping conversation: a greeting, a search,
/// category and refinement answers, cart additions, a similar-image drag
/// and a farewell.
pub fn scripted_conversation() -> Vec<MessageBody> {
    vec![
        MessageBody::text("hello"),
        MessageBody::text("i want images of cars"),
        MessageBody::text("city cars"),
        MessageBody::text("show more"),
        MessageBody::text("urban city cars"),
        MessageBody::event("add_to_cart", Some("car-001"), None),
        MessageBody::text("racing"),
        MessageBody::event("drag_similar", Some("car-010"), None),
        MessageBody::text("i am organizing a racing competition"),
        MessageBody::event("add_to_cart", Some("car-009"), None),
        MessageBody::text("no, bye"),
    ]
}
