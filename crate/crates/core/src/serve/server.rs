//! Line-delimited JSON over TCP, one thread per connection.
//!
//! Request: `{"query": "..."}`. Response: a [`Response`] object, or
//! `{"error": "..."}` for a malformed request line.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};

use super::{Response, Router};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Request {
    query: String,
}

#[derive(Serialize, Deserialize)]
struct ErrorReply {
    error: String,
}

pub struct Server {
    listener: TcpListener,
    router: Arc<Router>,
}

impl Server {
    /// Binds without accepting yet; port 0 picks a free port.
    pub fn bind(addr: impl ToSocketAddrs, router: Arc<Router>) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        Ok(Self { listener, router })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Serves until the process ends.
    pub fn run(self) -> Result<()> {
        let stop = AtomicBool::new(false);
        accept_loop(&self.listener, &self.router, &stop);
        Ok(())
    }

    /// Serves on a background thread until [`ServerHandle::shutdown`].
    pub fn spawn(self) -> Result<ServerHandle> {
        let addr = self.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let router = Arc::clone(&self.router);
        let thread = {
            let stop = Arc::clone(&stop);
            std::thread::spawn(move || accept_loop(&self.listener, &self.router, &stop))
        };
        Ok(ServerHandle {
            addr,
            stop,
            router,
            thread: Some(thread),
        })
    }
}

fn accept_loop(listener: &TcpListener, router: &Arc<Router>, stop: &AtomicBool) {
    for stream in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = stream else { continue };
        let router = Arc::clone(router);
        std::thread::spawn(move || {
            // a dropped connection only ends its own session
            let _ = handle_connection(stream, &router);
        });
    }
}

fn handle_connection(stream: TcpStream, router: &Router) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    let mut writer = stream.try_clone()?;
    for line in BufReader::new(stream).lines() {
        let line = line?;
        let reply = match serde_json::from_str::<Request>(&line) {
            Ok(request) => serde_json::to_string(&router.serve_request(&request.query)),
            Err(e) => serde_json::to_string(&ErrorReply {
                error: format!("malformed request: {e}"),
            }),
        }
        .expect("response types serialize");
        writer.write_all(format!("{reply}\n").as_bytes())?;
    }
    Ok(())
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    router: Arc<Router>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn router(&self) -> &Router {
        &self.router
    }

    /// Stops accepting connections and waits for the accept thread.
    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        if let Some(thread) = self.thread.take() {
            self.stop.store(true, Ordering::SeqCst);
            // wake the blocking accept
            let _ = TcpStream::connect(self.addr);
            let _ = thread.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_now();
    }
}

/// Blocking client for the line protocol.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let writer = TcpStream::connect(addr)?;
        writer.set_nodelay(true)?;
        let reader = BufReader::new(writer.try_clone()?);
        Ok(Self { reader, writer })
    }

    pub fn request(&mut self, query: &str) -> Result<Response> {
        let line = serde_json::to_string(&Request {
            query: query.to_string(),
        })?;
        let reply = self.request_raw(&line)?;
        if let Ok(err) = serde_json::from_str::<ErrorReply>(&reply) {
            return Err(Error::InvalidInput(err.error));
        }
        Ok(serde_json::from_str(&reply)?)
    }

    /// Sends one raw line and returns the raw reply line.
    pub fn request_raw(&mut self, line: &str) -> Result<String> {
        self.writer.write_all(format!("{line}\n").as_bytes())?;
        let mut reply = String::new();
        if self.reader.read_line(&mut reply)? == 0 {
            return Err(Error::InvalidInput("server closed the connection".into()));
        }
        Ok(reply.trim_end().to_string())
    }
}
