use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::candidates::{propose_candidates, CandidateSet};
use crate::env::{GoalSpec, SubgoalSpec};

pub const DEFAULT_PROMPT: &str = "\
You plan for a robot arm on a table with white blocks, paint bowls (red, green, blue, yellow) and a brown box.
Dropping a white block in a bowl paints it. Reply with exactly 6 candidate subgoals, one per line, each either
\"paint white block <color>\" or \"pack <color> block in brown box\".

Goal: put a red block, a green block and a blue block in the brown box
paint white block red
paint white block green
paint white block blue
pack red block in brown box
pack green block in brown box
pack blue block in brown box

Goal: {goal}
";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmClientConfig {
    pub enabled: bool,
    pub endpoint: String,
    pub timeout_ms: u64,
    /// Few-shot prompt; `{goal}` is replaced by the goal text.
    pub prompt_template: String,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            endpoint: "http://127.0.0.1:8080/complete".into(),
            timeout_ms: 5000,
            prompt_template: DEFAULT_PROMPT.into(),
        }
    }
}

/// Why the template proposer was used instead of the model's answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LlmOutcome {
    Accepted,
    Disabled,
    Transport(String),
    ParseFailure(String),
}

pub fn render_prompt(cfg: &LlmClientConfig, goal: &GoalSpec) -> String {
    cfg.prompt_template.replace("{goal}", &goal.to_string())
}

/// Parses one subgoal per non-empty line; the whole reply is rejected if any
/// line fails or the result is not a valid candidate set.
pub fn parse_reply(text: &str, goal: &GoalSpec) -> Result<CandidateSet, String> {
    let mut cands = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let w: SubgoalSpec = line.parse().map_err(|e| format!("{e}"))?;
        cands.push(w);
    }
    CandidateSet::new(cands, *goal).map_err(|e| e.to_string())
}

/// Asks the configured endpoint for candidates (plain-text request body,
/// plain-text reply) and falls back to [`propose_candidates`] whenever the
/// client is disabled, the request fails or the reply does not parse.
pub fn llm_propose<R: Rng + ?Sized>(goal: &GoalSpec, cfg: &LlmClientConfig, rng: &mut R) -> (CandidateSet, LlmOutcome) {
    if !cfg.enabled {
        return (propose_candidates(goal, rng), LlmOutcome::Disabled);
    }
    let agent = ureq::AgentBuilder::new()
        .timeout(Duration::from_millis(cfg.timeout_ms))
        .build();
    let reply = agent
        .post(&cfg.endpoint)
        .set("Content-Type", "text/plain")
        .send_string(&render_prompt(cfg, goal))
        .map_err(|e| e.to_string())
        .and_then(|r| r.into_string().map_err(|e| e.to_string()));
    match reply {
        Err(e) => {
            log::warn!("candidate request failed, using template proposer: {e}");
            (propose_candidates(goal, rng), LlmOutcome::Transport(e))
        }
        Ok(text) => match parse_reply(&text, goal) {
            Ok(set) => (set, LlmOutcome::Accepted),
            Err(e) => {
                log::warn!("unparseable candidate reply, using template proposer: {e}");
                (propose_candidates(goal, rng), LlmOutcome::ParseFailure(e))
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EntityColor::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// Serves `body` to a single request and returns the request it received.
    fn one_shot_server(body: &'static str) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (mut sock, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            loop {
                let n = sock.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                let text = String::from_utf8_lossy(&buf).to_string();
                if let Some(h) = text.find("\r\n\r\n") {
                    let len: usize = text
                        .lines()
                        .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse().unwrap()))
                        .unwrap_or(0);
                    if buf.len() >= h + 4 + len {
                        break;
                    }
                }
                if n == 0 {
                    break;
                }
            }
            let resp = format!("HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}", body.len());
            sock.write_all(resp.as_bytes()).unwrap();
            String::from_utf8_lossy(&buf).to_string()
        });
        (format!("http://{addr}/complete"), handle)
    }

    fn goal() -> GoalSpec {
        GoalSpec::new([Red, Green, Blue]).unwrap()
    }

    #[test]
    fn disabled_matches_template_proposer() {
        let cfg = LlmClientConfig::default();
        let (set, outcome) = llm_propose(&goal(), &cfg, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(outcome, LlmOutcome::Disabled);
        assert_eq!(set, propose_candidates(&goal(), &mut ChaCha8Rng::seed_from_u64(3)));
    }

    #[test]
    fn well_formed_reply_is_used() {
        let (url, server) = one_shot_server(
            "1. pack blue block in brown box\n2. paint white block red\npaint white block green\n\
             paint white block blue\npack red block in brown box\npack green block in brown box\n",
        );
        let cfg = LlmClientConfig {
            enabled: true,
            endpoint: url,
            ..LlmClientConfig::default()
        };
        let (set, outcome) = llm_propose(&goal(), &cfg, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(outcome, LlmOutcome::Accepted);
        assert_eq!(set.candidates[0], SubgoalSpec::pack(Blue));
        assert_eq!(set.candidates[1], SubgoalSpec::paint(Red));
        let request = server.join().unwrap();
        assert!(request.contains("Goal: put a red block, a green block and a blue block in the brown box"));
    }

    #[test]
    fn malformed_line_falls_back() {
        let (url, server) = one_shot_server("paint white block red\nfly to the moon\n");
        let cfg = LlmClientConfig {
            enabled: true,
            endpoint: url,
            ..LlmClientConfig::default()
        };
        let (set, outcome) = llm_propose(&goal(), &cfg, &mut ChaCha8Rng::seed_from_u64(5));
        assert!(matches!(outcome, LlmOutcome::ParseFailure(_)));
        assert_eq!(set, propose_candidates(&goal(), &mut ChaCha8Rng::seed_from_u64(5)));
        server.join().unwrap();
    }

    #[test]
    fn unreachable_endpoint_falls_back() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let cfg = LlmClientConfig {
            enabled: true,
            endpoint: format!("http://127.0.0.1:{port}/"),
            timeout_ms: 200,
            ..LlmClientConfig::default()
        };
        let (set, outcome) = llm_propose(&goal(), &cfg, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(matches!(outcome, LlmOutcome::Transport(_)));
        assert_eq!(set.len(), 6);
    }
}
