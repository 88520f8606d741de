//! The geometry conversation loop against scripted model replies and the
//! stand-in mesher.

mod support;

use dem_core::mesh::{GmshMesher, MesherError, GAMMA_T, GAMMA_U, OMEGA};
use dem_service::llm::{Role, ScriptedBackend};
use dem_service::session::{llm_geo_turn, ChatSession, TurnError};
use support::*;

#[test]
fn first_reply_meshes() {
    let backend = ScriptedBackend::new([good_reply()]);
    let mut s = ChatSession::new();
    let turn = llm_geo_turn(&mut s, &backend, &fake_gmsh(), "a unit square", 2, 0.1).unwrap();
    assert_eq!(turn.attempts, 1);
    assert_eq!(turn.geo_text, unit_square_geo());
    for g in [OMEGA, GAMMA_U, GAMMA_T] {
        assert!(!turn.mesh.group(g).is_empty(), "{g}");
    }
    assert_eq!(s.last_geo.as_deref(), Some(turn.geo_text.as_str()));
    assert!(s.last_mesh.is_some());
    // system, user, assistant
    assert_eq!(s.history.len(), 3);
    assert_eq!(s.history[0].role, Role::System);
    assert!(s.history[1].content.contains("a unit square"));
}

#[test]
fn mesher_error_is_fed_back() {
    let backend = ScriptedBackend::new([broken_reply(), good_reply()]);
    let mut s = ChatSession::new();
    let turn = llm_geo_turn(&mut s, &backend, &fake_gmsh(), "a unit square", 2, 0.1).unwrap();
    assert_eq!(turn.attempts, 2);
    let requests = backend.requests();
    assert_eq!(requests.len(), 2);
    let feedback = requests[1].last().unwrap();
    assert_eq!(feedback.role, Role::User);
    assert!(feedback.content.contains("Gmsh failed"), "{}", feedback.content);
    assert!(feedback.content.contains("syntax error (BROKEN)"), "{}", feedback.content);
    // the failed attempt stays in the history
    assert!(requests[1].iter().any(|m| m.role == Role::Assistant && m.content.contains("BROKEN")));
}

#[test]
fn prose_replies_exhaust_the_budget() {
    let backend = ScriptedBackend::new([PROSE_REPLY; 4]);
    let mut s = ChatSession::new();
    let err = llm_geo_turn(&mut s, &backend, &fake_gmsh(), "a unit square", 2, 0.1).unwrap_err();
    match err {
        TurnError::RetriesExhausted {
            attempts,
            last_diagnostics,
        } => {
            assert_eq!(attempts, 4);
            assert!(last_diagnostics.contains("fenced"), "{last_diagnostics}");
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(backend.requests().len(), 4);
    assert!(s.last_geo.is_none());
}

#[test]
fn zero_budget_reports_missing_block() {
    let backend = ScriptedBackend::new([PROSE_REPLY]);
    let mut s = ChatSession::new();
    s.retry_budget = 0;
    let err = llm_geo_turn(&mut s, &backend, &fake_gmsh(), "a unit square", 2, 0.1).unwrap_err();
    assert!(matches!(err, TurnError::NoGeoBlock), "{err:?}");
}

#[test]
fn missing_groups_are_named() {
    let backend = ScriptedBackend::new([no_groups_reply(), good_reply()]);
    let mut s = ChatSession::new();
    let turn = llm_geo_turn(&mut s, &backend, &fake_gmsh(), "a unit square", 2, 0.1).unwrap();
    assert_eq!(turn.attempts, 2);
    let feedback = backend.requests()[1].last().unwrap().content.clone();
    assert!(feedback.contains("Gamma_t"), "{feedback}");
}

#[test]
fn backend_failure_stops_the_turn() {
    let backend = ScriptedBackend::default();
    backend.push_status(502);
    let mut s = ChatSession::new();
    let err = llm_geo_turn(&mut s, &backend, &fake_gmsh(), "a unit square", 2, 0.1).unwrap_err();
    match err {
        TurnError::Backend(b) => assert_eq!(b.status(), 502),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unusable_mesher_is_not_retried() {
    let backend = ScriptedBackend::new([good_reply(), good_reply()]);
    let mut s = ChatSession::new();
    let mesher = GmshMesher::new("/nonexistent/gmsh");
    let err = llm_geo_turn(&mut s, &backend, &mesher, "a unit square", 2, 0.1).unwrap_err();
    assert!(matches!(err, TurnError::Mesher(MesherError::MesherNotFound(_))), "{err:?}");
    assert_eq!(backend.requests().len(), 1);
}

#[test]
fn three_dimensional_request() {
    let backend = ScriptedBackend::new([good_reply()]);
    let mut s = ChatSession::new();
    let turn = llm_geo_turn(&mut s, &backend, &fake_gmsh(), "a cube", 3, 0.5).unwrap();
    assert_eq!(turn.mesh.dim, 3);
    assert!(s.history[1].content.contains("3D"));
}
