//! Smoke test against a real chat-completion endpoint.
//!
//! Needs `LEAKSCOPE_API_KEY`; `LEAKSCOPE_ENDPOINT` and `LEAKSCOPE_MODEL`
//! override the defaults. Run with `cargo test --test live_smoke -- --ignored`.

use std::path::PathBuf;

use leakscope::frontend::{extract_methods, parse_method, select_methods, MethodSnippet};
use leakscope::gateway::{Gateway, ProviderConfig, ProviderKind};

const SNIPPETS: [&str; 4] = [
    "void copy(String from, String to) throws IOException {\n  FileInputStream in = new FileInputStream(from);\n  FileOutputStream out = new FileOutputStream(to);\n  byte[] buf = new byte[4096];\n  int n;\n  while ((n = in.read(buf)) > 0) {\n    out.write(buf, 0, n);\n  }\n  in.close();\n  out.close();\n}",
    "int count(SQLiteDatabase db) {\n  Cursor c = db.rawQuery(\"SELECT * FROM t\", null);\n  int n = c.getCount();\n  return n;\n}",
    "void update() {\n  lock.lock();\n  try {\n    counter++;\n  } finally {\n    lock.unlock();\n  }\n}",
    "void hold(Context ctx) {\n  PowerManager pm = (PowerManager) ctx.getSystemService(Context.POWER_SERVICE);\n  WakeLock wl = pm.newWakeLock(PowerManager.PARTIAL_WAKE_LOCK, \"tag\");\n  wl.acquire();\n  doWork();\n  if (wl.isHeld())\n    wl.release();\n}",
];

fn motivating_fixed() -> MethodSnippet {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/motivating/FeedFetcherFixed.java");
    let text = std::fs::read_to_string(path).unwrap();
    select_methods(extract_methods(&text).unwrap(), Some("fetchFeed")).remove(0)
}

#[test]
#[ignore = "needs network access and LEAKSCOPE_API_KEY"]
fn live_provider_returns_well_formed_intentions() {
    let mut config = ProviderConfig {
        kind: ProviderKind::RemoteChat,
        ..ProviderConfig::default()
    };
    if let Ok(endpoint) = std::env::var("LEAKSCOPE_ENDPOINT") {
        config.endpoint = endpoint;
    }
    if let Ok(model) = std::env::var("LEAKSCOPE_MODEL") {
        config.model = model;
    }
    let gateway = Gateway::from_config(&config).expect("remote provider configured");
    let mut snippets: Vec<MethodSnippet> = SNIPPETS
        .iter()
        .map(|s| parse_method(s, 1).unwrap())
        .collect();
    snippets.push(motivating_fixed());
    for s in &snippets {
        let intents = gateway.infer(s).expect("provider answered");
        assert!(!intents.is_empty(), "no intentions for {}", s.symbol());
        for i in &intents {
            assert!(
                (s.first_line()..=s.last_line()).contains(&i.lineno()),
                "{i} outside {}",
                s.symbol()
            );
        }
    }
}
