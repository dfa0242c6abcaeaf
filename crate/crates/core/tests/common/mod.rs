//! Minimal HTTP/1.1 server for exercising the chat client against canned replies.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

#[derive(Debug, Clone)]
pub struct MockReply {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl MockReply {
    /// 200 with an OpenAI-style body whose assistant message is `content`.
    pub fn content(content: &str) -> Self {
        let body = serde_json::json!({
            "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]
        });
        MockReply {
            status: 200,
            body: body.to_string(),
            delay: Duration::ZERO,
        }
    }

    pub fn status(status: u16) -> Self {
        MockReply {
            status,
            body: r#"{"error":"mock"}"#.into(),
            delay: Duration::ZERO,
        }
    }

    pub fn delayed(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

pub struct MockServer {
    pub url: String,
    requests: Arc<Mutex<Vec<String>>>,
}

impl MockServer {
    /// Serves `replies` in order, one per request; the last one repeats once exhausted.
    pub fn start(replies: Vec<MockReply>) -> Self {
        assert!(!replies.is_empty());
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&requests);
        thread::spawn(move || {
            let mut served = 0usize;
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let reply = replies[served.min(replies.len() - 1)].clone();
                served += 1;
                let log = Arc::clone(&log);
                thread::spawn(move || handle(stream, reply, log));
            }
        });
        MockServer { url, requests }
    }

    /// Request bodies received so far.
    pub fn requests(&self) -> Vec<String> {
        self.requests.lock().unwrap().clone()
    }
}

fn handle(stream: TcpStream, reply: MockReply, log: Arc<Mutex<Vec<String>>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    log.lock().unwrap().push(String::from_utf8_lossy(&body).into_owned());
    thread::sleep(reply.delay);
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {} Mock\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        reply.status,
        reply.body.len(),
        reply.body
    );
    let _ = stream.flush();
}

/// User-message text of a recorded chat request body.
pub fn user_message(request_body: &str) -> String {
    let v: serde_json::Value = serde_json::from_str(request_body).unwrap();
    v["messages"][1]["content"].as_str().unwrap_or_default().to_string()
}

use topicsim::llm::{BackendError, ChatClient, Completion, PromptInputs, PromptRecord, StubBackend};

/// Answers like the stub until round `fail_from`, then forwards to a chat endpoint (which in
/// tests is a mock that keeps failing).
pub struct FailingFrom {
    pub fail_from: u32,
    pub endpoint: ChatClient,
}

impl Completion for FailingFrom {
    fn complete(&self, prompt: &PromptRecord, inputs: &PromptInputs) -> Result<String, BackendError> {
        if prompt.round >= self.fail_from {
            self.endpoint.complete(prompt, inputs)
        } else {
            StubBackend.complete(prompt, inputs)
        }
    }
}
