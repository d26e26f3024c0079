//! Client (and a loopback server) for the framed bridge protocol.
//!
//! One [`BridgeClient`] owns one connection and serialises every request on
//! it; callers that want parallelism hold several clients.

use std::collections::hash_map::DefaultHasher;
use std::collections::VecDeque;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::{BufReader, BufWriter, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::Mutex;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::types::{BoxPrompt, FeatureMap, Image, MaskProposal, PointPrompt, PromptSet};

use super::framing::{read_frame, read_frame_opt, write_frame, FrameError, DEFAULT_MAX_FRAME};
use super::protocol::{
    codes, features_from_bytes, features_to_bytes, mask_from_bytes, mask_to_bytes, DecodeReply,
    EmbedReply, ErrorReply, MaskHeader, OkReply, Request, TensorHeader, WirePoint,
};
use super::{DecodeRequest, SegmenterBackend};

/// Embeddings remembered per connection (client and server side).
pub const EMBEDDING_CACHE: usize = 8;

/// Where a bridge server lives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BridgeAddress {
    /// `host:port`
    Tcp(String),
    /// Command line of a child process speaking the protocol on stdio.
    Stdio(String),
}

impl FromStr for BridgeAddress {
    type Err = Error;

    /// Accepts `tcp:host:port`, `stdio:<command line>` or a bare `host:port`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("tcp:") {
            return Ok(Self::Tcp(rest.to_string()));
        }
        if let Some(rest) = s.strip_prefix("stdio:") {
            if rest.trim().is_empty() {
                return Err(Error::InvalidArgument("stdio bridge needs a command".into()));
            }
            return Ok(Self::Stdio(rest.trim().to_string()));
        }
        match s.rsplit_once(':') {
            Some((host, port)) if !host.is_empty() && port.parse::<u16>().is_ok() => {
                Ok(Self::Tcp(s.to_string()))
            }
            _ => Err(Error::InvalidArgument(format!(
                "bridge address {s:?} is neither tcp:host:port nor stdio:<cmd>"
            ))),
        }
    }
}

impl fmt::Display for BridgeAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Tcp(a) => write!(f, "tcp:{a}"),
            Self::Stdio(c) => write!(f, "stdio:{c}"),
        }
    }
}

struct Connection {
    reader: Box<dyn Read + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
    /// (feature fingerprint, embedding id), most recent last
    known: VecDeque<(u64, u64)>,
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            let _ = self.writer.flush();
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn transport(e: FrameError) -> Error {
    Error::BackendFailure(format!("transport: {e}"))
}

fn fingerprint(features: &FeatureMap) -> u64 {
    let mut h = DefaultHasher::new();
    (features.rows(), features.cols(), features.channels()).hash(&mut h);
    features.stride().to_bits().hash(&mut h);
    features.image_dims().hash(&mut h);
    for v in features.data() {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

pub struct BridgeClient {
    name: String,
    max_frame: usize,
    conn: Mutex<Connection>,
}

impl BridgeClient {
    pub fn connect(address: &BridgeAddress) -> Result<Self> {
        match address {
            BridgeAddress::Tcp(addr) => {
                let stream = TcpStream::connect(addr)
                    .map_err(|e| Error::BackendFailure(format!("connect {addr}: {e}")))?;
                stream.set_nodelay(true).ok();
                let reader = stream
                    .try_clone()
                    .map_err(|e| Error::BackendFailure(e.to_string()))?;
                Ok(Self::from_parts(
                    format!("bridge:{address}"),
                    Box::new(BufReader::new(reader)),
                    Box::new(BufWriter::new(stream)),
                    None,
                ))
            }
            BridgeAddress::Stdio(cmdline) => {
                let mut parts = cmdline.split_whitespace();
                let program = parts
                    .next()
                    .ok_or_else(|| Error::InvalidArgument("empty bridge command".into()))?;
                let mut child = Command::new(program)
                    .args(parts)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| Error::BackendFailure(format!("spawn {program}: {e}")))?;
                let stdin = child.stdin.take().expect("stdin is piped");
                let stdout = child.stdout.take().expect("stdout is piped");
                Ok(Self::from_parts(
                    format!("bridge:{address}"),
                    Box::new(BufReader::new(stdout)),
                    Box::new(BufWriter::new(stdin)),
                    Some(child),
                ))
            }
        }
    }

    /// Client over an arbitrary byte stream pair.
    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
    ) -> Self {
        Self::from_parts(
            "bridge:stream".into(),
            Box::new(BufReader::new(reader)),
            Box::new(BufWriter::new(writer)),
            None,
        )
    }

    fn from_parts(
        name: String,
        reader: Box<dyn Read + Send>,
        writer: Box<dyn Write + Send>,
        child: Option<Child>,
    ) -> Self {
        Self {
            name,
            max_frame: DEFAULT_MAX_FRAME,
            conn: Mutex::new(Connection {
                reader,
                writer,
                child,
                known: VecDeque::new(),
            }),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Connection> {
        // a poisoned lock only means another request panicked mid-flight
        self.conn.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn ping(&self) -> Result<()> {
        let mut conn = self.lock();
        send_json(&mut conn, &Request::Ping)?;
        conn.writer.flush().map_err(FrameError::from).map_err(transport)?;
        let reply = self.read_reply(&mut conn)?;
        let ok: OkReply = parse(reply)?;
        if !ok.ok {
            return Err(Error::BackendFailure("ping answered ok=false".into()));
        }
        Ok(())
    }

    fn read_reply(&self, conn: &mut Connection) -> Result<Value> {
        let frame = read_frame(&mut conn.reader, self.max_frame).map_err(transport)?;
        let value: Value = serde_json::from_slice(&frame)
            .map_err(|e| Error::BackendFailure(format!("malformed reply: {e}")))?;
        if let Some(code) = value.get("error") {
            let err: ErrorReply = parse(value.clone())?;
            return Err(match code.as_str() {
                Some(codes::NO_OBJECT) => Error::NoObject,
                _ => Error::BackendFailure(match err.detail {
                    Some(d) => format!("{}: {d}", err.error),
                    None => err.error,
                }),
            });
        }
        Ok(value)
    }

    fn decode_once(
        &self,
        conn: &mut Connection,
        req: &DecodeRequest<'_>,
        embedding_id: Option<u64>,
    ) -> Result<Vec<MaskProposal>> {
        let features = req.features;
        let prompts = &req.prompts;
        let (w, h) = features.image_dims();
        let inline = embedding_id.is_none().then(|| TensorHeader::of(features));
        let mask_prompt = prompts.mask_prompt.as_ref().map(|m| MaskHeader {
            width: m.width(),
            height: m.height(),
            payload_bytes: m.width() * m.height(),
        });
        let message = Request::Decode {
            embedding_id,
            inline,
            points: prompts
                .points
                .iter()
                .map(|p| WirePoint {
                    x: p.x,
                    y: p.y,
                    label: p.polarity,
                })
                .collect(),
            box_prompt: prompts
                .box_prompt
                .map(|b| [b.x_min, b.y_min, b.x_max, b.y_max]),
            mask_prompt,
            k: req.proposals_requested,
        };
        send_json(conn, &message)?;
        if inline.is_some() {
            write_frame(&mut conn.writer, &features_to_bytes(features.data())).map_err(transport)?;
        }
        if let Some(m) = &prompts.mask_prompt {
            write_frame(&mut conn.writer, &mask_to_bytes(m)).map_err(transport)?;
        }
        conn.writer.flush().map_err(FrameError::from).map_err(transport)?;

        let reply: DecodeReply = parse(self.read_reply(conn)?)?;
        if (reply.width, reply.height) != (w, h) || reply.payload_bytes != w * h {
            return Err(Error::BackendFailure(format!(
                "decode reply geometry {}x{} does not match image {w}x{h}",
                reply.width, reply.height
            )));
        }
        let mut out = Vec::with_capacity(reply.scores.len());
        for &score in &reply.scores {
            let bytes = read_frame(&mut conn.reader, self.max_frame).map_err(transport)?;
            let mask = mask_from_bytes(w, h, &bytes)
                .map_err(|e| Error::BackendFailure(e.to_string()))?;
            if !score.is_finite() {
                return Err(Error::BackendFailure(format!("non-finite score {score}")));
            }
            out.push(MaskProposal::new(mask, score.clamp(0.0, 1.0))?);
        }
        if out.len() != req.proposals_requested {
            return Err(Error::BackendFailure(format!(
                "asked for {} proposals, received {}",
                req.proposals_requested,
                out.len()
            )));
        }
        Ok(out)
    }
}

fn send_json<T: Serialize>(conn: &mut Connection, message: &T) -> Result<()> {
    let json = serde_json::to_vec(message).expect("protocol messages serialise");
    write_frame(&mut conn.writer, &json).map_err(transport)
}

fn parse<T: serde::de::DeserializeOwned>(value: Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| Error::BackendFailure(format!("malformed reply: {e}")))
}

impl SegmenterBackend for BridgeClient {
    fn name(&self) -> &str {
        &self.name
    }

    fn embed(&self, image: &Image) -> Result<FeatureMap> {
        let mut conn = self.lock();
        let (width, height) = image.dims();
        send_json(
            &mut conn,
            &Request::Embed {
                width,
                height,
                payload_bytes: image.data().len(),
            },
        )?;
        write_frame(&mut conn.writer, image.data()).map_err(transport)?;
        conn.writer.flush().map_err(FrameError::from).map_err(transport)?;

        let reply: EmbedReply = parse(self.read_reply(&mut conn)?)?;
        let bytes = read_frame(&mut conn.reader, self.max_frame).map_err(transport)?;
        let features = features_from_bytes(&reply.tensor, &bytes)
            .map_err(|e| Error::BackendFailure(e.to_string()))?;
        if features.image_dims() != (width, height) {
            return Err(Error::BackendFailure(format!(
                "embedding describes a {:?} image, sent {width}x{height}",
                features.image_dims()
            )));
        }
        let fp = fingerprint(&features);
        conn.known.retain(|&(f, _)| f != fp);
        conn.known.push_back((fp, reply.embedding_id));
        while conn.known.len() > EMBEDDING_CACHE {
            conn.known.pop_front();
        }
        Ok(features)
    }

    fn decode(&self, req: &DecodeRequest<'_>) -> Result<Vec<MaskProposal>> {
        req.validate()?;
        let mut conn = self.lock();
        let fp = fingerprint(req.features);
        let id = conn.known.iter().find(|&&(f, _)| f == fp).map(|&(_, id)| id);
        match self.decode_once(&mut conn, req, id) {
            // the server evicted it; fall back to sending the tensor
            Err(Error::BackendFailure(msg))
                if id.is_some() && msg.starts_with(codes::UNKNOWN_EMBEDDING) =>
            {
                conn.known.retain(|&(f, _)| f != fp);
                self.decode_once(&mut conn, req, None)
            }
            other => other,
        }
    }
}

/// Serves the bridge protocol over one connection using `backend`, until the
/// peer closes the stream. Malformed requests get an in-band error reply and
/// the session continues; a stream that ends mid-frame or announces an
/// oversize frame gets an error reply and ends the session.
pub fn serve<R: Read, W: Write>(
    backend: &dyn SegmenterBackend,
    reader: R,
    writer: W,
    max_frame: usize,
) -> Result<()> {
    let mut reader = BufReader::new(reader);
    let mut writer = BufWriter::new(writer);
    let mut session = Session {
        backend,
        max_frame,
        next_id: 1,
        cache: VecDeque::new(),
    };
    loop {
        let frame = match read_frame_opt(&mut reader, max_frame) {
            Ok(Some(f)) => f,
            Ok(None) => return Ok(()),
            Err(e) => {
                let code = match e {
                    FrameError::Truncated { .. } => codes::TRUNCATED,
                    FrameError::Oversize { .. } => codes::OVERSIZE,
                    FrameError::Io(_) => return Err(e.into()),
                };
                reply_error(&mut writer, code, &e.to_string())?;
                writer.flush()?;
                return Ok(());
            }
        };
        match session.handle(&frame, &mut reader, &mut writer) {
            Ok(()) => {}
            Err(SessionError::Reply(code, detail)) => reply_error(&mut writer, code, &detail)?,
            Err(SessionError::Fatal(e)) => {
                let code = match &e {
                    Error::Frame(FrameError::Truncated { .. }) => codes::TRUNCATED,
                    Error::Frame(FrameError::Oversize { .. }) => codes::OVERSIZE,
                    _ => codes::BACKEND_FAILURE,
                };
                reply_error(&mut writer, code, &e.to_string())?;
                writer.flush()?;
                return Ok(());
            }
        }
        writer.flush()?;
    }
}

fn reply_error<W: Write>(w: &mut W, code: &str, detail: &str) -> Result<()> {
    let reply = ErrorReply {
        error: code.to_string(),
        detail: Some(detail.to_string()),
    };
    write_frame(w, &serde_json::to_vec(&reply).expect("serialisable"))?;
    Ok(())
}

enum SessionError {
    /// Answer in-band and keep serving.
    Reply(&'static str, String),
    /// Answer and end the session.
    Fatal(Error),
}

impl From<FrameError> for SessionError {
    fn from(e: FrameError) -> Self {
        SessionError::Fatal(e.into())
    }
}

struct Session<'a> {
    backend: &'a dyn SegmenterBackend,
    max_frame: usize,
    next_id: u64,
    cache: VecDeque<(u64, FeatureMap)>,
}

impl Session<'_> {
    fn handle<R: Read, W: Write>(
        &mut self,
        frame: &[u8],
        reader: &mut R,
        writer: &mut W,
    ) -> Result<(), SessionError> {
        let request: Request = serde_json::from_slice(frame)
            .map_err(|e| SessionError::Reply(codes::BAD_REQUEST, e.to_string()))?;
        match request {
            Request::Ping => {
                write_frame(writer, br#"{"ok":true}"#)?;
            }
            Request::Embed {
                width,
                height,
                payload_bytes,
            } => {
                let bytes = read_frame(reader, self.max_frame)?;
                if bytes.len() != payload_bytes || payload_bytes != width * height * 3 {
                    return Err(SessionError::Reply(
                        codes::BAD_REQUEST,
                        format!("image payload has {} bytes", bytes.len()),
                    ));
                }
                let image = Image::new(width, height, bytes)
                    .map_err(|e| SessionError::Reply(codes::BAD_REQUEST, e.to_string()))?;
                let features = self
                    .backend
                    .embed(&image)
                    .map_err(|e| SessionError::Reply(codes::BACKEND_FAILURE, e.to_string()))?;
                let id = self.next_id;
                self.next_id += 1;
                let reply = EmbedReply {
                    ok: true,
                    embedding_id: id,
                    tensor: TensorHeader::of(&features),
                };
                write_frame(writer, &serde_json::to_vec(&reply).expect("serialisable"))?;
                write_frame(writer, &features_to_bytes(features.data()))?;
                self.cache.push_back((id, features));
                while self.cache.len() > EMBEDDING_CACHE {
                    self.cache.pop_front();
                }
            }
            Request::Decode {
                embedding_id,
                inline,
                points,
                box_prompt,
                mask_prompt,
                k,
            } => {
                // consume every announced payload before validating anything
                let inline_bytes = match &inline {
                    Some(_) => Some(read_frame(reader, self.max_frame)?),
                    None => None,
                };
                let mask_bytes = match &mask_prompt {
                    Some(_) => Some(read_frame(reader, self.max_frame)?),
                    None => None,
                };
                let inline_features;
                let features: &FeatureMap = match (embedding_id, inline, inline_bytes) {
                    (_, Some(header), Some(bytes)) => {
                        inline_features = features_from_bytes(&header, &bytes)
                            .map_err(|e| SessionError::Reply(codes::BAD_REQUEST, e.to_string()))?;
                        &inline_features
                    }
                    (Some(id), _, _) => {
                        let pos = self.cache.iter().position(|(i, _)| *i == id).ok_or_else(|| {
                            SessionError::Reply(codes::UNKNOWN_EMBEDDING, format!("id {id}"))
                        })?;
                        // refresh recency
                        let entry = self.cache.remove(pos).expect("position is valid");
                        self.cache.push_back(entry);
                        &self.cache.back().expect("just pushed").1
                    }
                    _ => {
                        return Err(SessionError::Reply(
                            codes::BAD_REQUEST,
                            "decode needs embedding_id or inline features".into(),
                        ))
                    }
                };
                let mask = match (mask_prompt, mask_bytes) {
                    (Some(h), Some(bytes)) => Some(
                        mask_from_bytes(h.width, h.height, &bytes)
                            .map_err(|e| SessionError::Reply(codes::BAD_REQUEST, e.to_string()))?,
                    ),
                    _ => None,
                };
                let box_prompt = box_prompt
                    .map(|[x0, y0, x1, y1]| BoxPrompt::new(x0, y0, x1, y1))
                    .transpose()
                    .map_err(|e| SessionError::Reply(codes::INVALID_PROMPT, e.to_string()))?;
                let points = points
                    .into_iter()
                    .map(|p| PointPrompt {
                        x: p.x,
                        y: p.y,
                        polarity: p.label,
                    })
                    .collect();
                let prompts = PromptSet::new(points, box_prompt, mask)
                    .map_err(|e| SessionError::Reply(codes::INVALID_PROMPT, e.to_string()))?;
                let req = DecodeRequest {
                    features,
                    prompts,
                    proposals_requested: k,
                };
                req.validate()
                    .map_err(|e| SessionError::Reply(codes::INVALID_PROMPT, e.to_string()))?;
                let proposals = self.backend.decode(&req).map_err(|e| match e {
                    Error::NoObject => SessionError::Reply(codes::NO_OBJECT, e.to_string()),
                    other => SessionError::Reply(codes::BACKEND_FAILURE, other.to_string()),
                })?;
                let (w, h) = features.image_dims();
                let reply = DecodeReply {
                    ok: true,
                    scores: proposals.iter().map(|p| p.score).collect(),
                    width: w,
                    height: h,
                    payload_bytes: w * h,
                };
                write_frame(writer, &serde_json::to_vec(&reply).expect("serialisable"))?;
                for p in &proposals {
                    write_frame(writer, &mask_to_bytes(&p.mask))?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmenter::framing::encode_frame;
    use crate::segmenter::mock::MockOracle;

    #[test]
    fn parses_addresses() {
        assert_eq!(
            "tcp:localhost:9000".parse::<BridgeAddress>().unwrap(),
            BridgeAddress::Tcp("localhost:9000".into())
        );
        assert_eq!(
            "127.0.0.1:7".parse::<BridgeAddress>().unwrap(),
            BridgeAddress::Tcp("127.0.0.1:7".into())
        );
        assert_eq!(
            "stdio:python -m sam_bridge --stub".parse::<BridgeAddress>().unwrap(),
            BridgeAddress::Stdio("python -m sam_bridge --stub".into())
        );
        assert!("mock".parse::<BridgeAddress>().is_err());
        assert!("stdio:".parse::<BridgeAddress>().is_err());
    }

    fn run_server(input: Vec<u8>) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        serve(&MockOracle::new(2), &input[..], &mut out, 1 << 20).unwrap();
        let mut frames = Vec::new();
        let mut r = &out[..];
        while let Some(f) = read_frame_opt(&mut r, 1 << 20).unwrap() {
            frames.push(f);
        }
        frames
    }

    fn json(frame: &[u8]) -> Value {
        serde_json::from_slice(frame).unwrap()
    }

    #[test]
    fn server_answers_ping_and_survives_garbage() {
        let mut input = encode_frame(b"not json").unwrap();
        input.extend(encode_frame(br#"{"op":"ping"}"#).unwrap());
        let frames = run_server(input);
        assert_eq!(frames.len(), 2);
        assert_eq!(json(&frames[0])["error"], "bad_request");
        assert_eq!(frames[1], br#"{"ok":true}"#);
    }

    #[test]
    fn server_reports_unknown_embedding() {
        let req = br#"{"op":"decode","embedding_id":42,"points":[{"x":0,"y":0,"label":"positive"}],"k":1}"#;
        let frames = run_server(encode_frame(req).unwrap());
        assert_eq!(json(&frames[0])["error"], "unknown_embedding");
    }

    #[test]
    fn server_reports_truncation() {
        let mut input = encode_frame(br#"{"op":"ping"}"#).unwrap();
        input.extend([9, 0, 0, 0, b'{']);
        let frames = run_server(input);
        assert_eq!(frames.len(), 2);
        assert_eq!(json(&frames[1])["error"], "truncated");
    }
}
