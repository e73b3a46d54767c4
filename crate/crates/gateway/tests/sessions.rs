mod common;

use common::*;
use xsys_core::ErrorCode;
use xsys_gateway::GatewayRequest;

fn create(h: &Harness, token: &str) -> String {
    let v = h.json(GatewayRequest::new("POST", "/api/sessions").bearer(token));
    assert!(v["interactions"].as_array().unwrap().is_empty());
    v["session_id"].as_str().unwrap().to_string()
}

fn history(sid: &str, token: &str) -> GatewayRequest {
    GatewayRequest::new("GET", &format!("/api/sessions/{sid}/history")).bearer(token)
}

fn restore(sid: &str, token: &str) -> GatewayRequest {
    GatewayRequest::new("GET", &format!("/api/sessions/{sid}/restore")).bearer(token)
}

#[test]
fn new_session_has_empty_history() {
    let h = Harness::new();
    let sid = create(&h, USER);
    let v = h.json(history(&sid, USER));
    assert!(v["interactions"].as_array().unwrap().is_empty());
    assert_eq!(h.send(restore(&sid, USER)).status, 404);
}

#[test]
fn three_interactions_in_order() {
    let h = Harness::new();
    let sid = create(&h, USER);
    let s = sample_id();
    let mut ids = Vec::new();
    for req in [search(USER, &["circle"]), inspect(USER, &s, None), compare(USER, &s)] {
        // Untagged traffic in between must not appear.
        h.send(search(USER, &["dot"]));
        ids.push(h.send(req.session(&sid)).audit_id.unwrap());
    }
    let v = h.json(history(&sid, USER));
    let got: Vec<u64> = v["interactions"].as_array().unwrap().iter().map(|i| i["audit_id"].as_u64().unwrap()).collect();
    assert_eq!(got, ids);
    let endpoints: Vec<&str> = v["interactions"].as_array().unwrap().iter().map(|i| i["endpoint"].as_str().unwrap()).collect();
    assert_eq!(endpoints, ["POST /api/search", "POST /api/inspect", "POST /api/compare"]);
}

#[test]
fn restore_returns_last_successful_interaction_verbatim() {
    let h = Harness::new();
    let sid = create(&h, DEV);
    let s = sample_id();
    let body = serde_json::json!({
        "network_id": "clever_hans",
        "sample_id": s,
        "steering": [{ "layer": 1, "unit": 3, "m": -1.0 }],
    })
    .to_string();
    let ok = h.send(GatewayRequest::new("POST", "/api/whatif").bearer(DEV).json(body.clone()).session(&sid));
    assert!(ok.is_ok());
    let failed = h.send(GatewayRequest::new("POST", "/api/inspect").bearer(DEV).json("{}").session(&sid));
    assert_eq!(failed.status, 400);
    let r = h.send(restore(&sid, DEV));
    assert!(r.is_ok(), "{}", String::from_utf8_lossy(&r.body));
    let text = String::from_utf8(r.body.to_vec()).unwrap();
    assert!(text.contains(&format!("\"request\":{body}")), "request embedded verbatim");
    assert!(text.contains(&format!("\"response\":{}", String::from_utf8_lossy(&ok.body))));
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["audit_id"], ok.audit_id.unwrap());
    assert_eq!(v["endpoint"], "POST /api/whatif");
    // Both attempts are in the history; restore skipped the failure.
    assert_eq!(h.json(history(&sid, DEV))["interactions"].as_array().unwrap().len(), 2);
}

#[test]
fn ownership_rules() {
    let h = Harness::new();
    let sid = create(&h, USER);
    h.send(search(USER, &["circle"]).session(&sid));

    let r = h.send(history(&sid, OTHER_USER));
    assert_eq!(r.error_code(), Some(ErrorCode::Forbidden));
    assert_eq!(h.send(restore(&sid, OTHER_USER)).status, 403);
    // Owner-or-auditor: a developer who is not the owner is refused too.
    assert_eq!(h.send(history(&sid, DEV)).status, 403);
    assert_eq!(h.json(history(&sid, AUDITOR))["interactions"].as_array().unwrap().len(), 1);

    // Writing into someone else's session is refused and not recorded there.
    let w = h.send(search(OTHER_USER, &["circle"]).session(&sid));
    assert_eq!(w.status, 403);
    assert_eq!(h.gw.audit().get(w.audit_id.unwrap()).unwrap().session_id, None);

    let unknown = h.send(search(USER, &["circle"]).session("no-such-session"));
    assert_eq!(unknown.error_code(), Some(ErrorCode::NotFound));
    assert_eq!(h.send(history("no-such-session", USER)).status, 404);
    assert_eq!(h.json(history(&sid, USER))["interactions"].as_array().unwrap().len(), 1);
}

#[test]
fn sessions_survive_restart() {
    let h = Harness::new();
    let sid = create(&h, USER);
    let first = h.send(search(USER, &["square"]).session(&sid));
    let h = h.restart();
    let r = h.send(history(&sid, USER));
    let v: serde_json::Value = serde_json::from_slice(&r.body).unwrap();
    assert_eq!(v["interactions"][0]["audit_id"], first.audit_id.unwrap());
    let restored = h.send(restore(&sid, USER));
    let v: serde_json::Value = serde_json::from_slice(&restored.body).unwrap();
    let original: serde_json::Value = serde_json::from_slice(&first.body).unwrap();
    assert_eq!(v["response"], original);
}
