//! Strategies for valid wire messages.

use bencher::wire::{ErrorCode, EvalRequest, EvalResponse, Value, ValueKind};
use proptest::prelude::*;
use serde_json::json;

pub fn id() -> impl Strategy<Value = String> {
    // up to 16 chars of any script stays within the 64-byte limit
    prop_oneof!["[a-zA-Z0-9_-]{1,64}", "\\PC{1,16}"]
}

pub fn benchmark_name() -> impl Strategy<Value = String> {
    "[a-z0-9-]{1,40}"
}

pub fn unit_f64() -> impl Strategy<Value = f64> {
    prop_oneof![
        Just(0.0),
        Just(1.0),
        Just(0.5),
        0.0..=1.0f64,
        (0u64..(1u64 << 53)).prop_map(|k| k as f64 / (1u64 << 53) as f64),
        proptest::num::f64::POSITIVE.prop_map(|x| if x > 1.0 { 1.0 / x } else { x }),
    ]
}

pub fn value() -> impl Strategy<Value = Value> {
    prop_oneof![
        unit_f64().prop_map(Value::continuous),
        any::<bool>().prop_map(Value::binary),
        (0u32..1000).prop_map(Value::ordinal),
        (0u32..1000).prop_map(Value::categorical),
    ]
}

pub fn homogeneous_point(max_len: usize) -> impl Strategy<Value = Vec<Value>> {
    (
        prop_oneof![
            Just(ValueKind::Continuous),
            Just(ValueKind::Binary),
            Just(ValueKind::Ordinal),
            Just(ValueKind::Categorical)
        ],
        proptest::collection::vec(unit_f64(), 0..max_len),
    )
        .prop_map(|(kind, raw)| {
            raw.into_iter()
                .map(|u| match kind {
                    ValueKind::Continuous => Value::continuous(u),
                    ValueKind::Binary => Value::binary(u >= 0.5),
                    _ => Value::new(kind, (u * 50.0).floor()),
                })
                .collect()
        })
}

pub fn request() -> impl Strategy<Value = EvalRequest> {
    prop_oneof![
        4 => (id(), benchmark_name(), proptest::collection::vec(value(), 0..40))
            .prop_map(|(id, b, v)| EvalRequest::evaluate(id, b, v)),
        1 => (id(), benchmark_name()).prop_map(|(id, b)| EvalRequest::describe(id, b)),
        1 => id().prop_map(EvalRequest::list),
        1 => id().prop_map(EvalRequest::health),
    ]
}

pub fn finite_f64() -> impl Strategy<Value = f64> {
    prop_oneof![
        proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO,
        -1e6..1e6f64,
        (-1000i64..1000).prop_map(|k| k as f64),
    ]
}

pub fn error_code() -> impl Strategy<Value = ErrorCode> {
    proptest::sample::select(ErrorCode::ALL.to_vec())
}

fn payload() -> impl Strategy<Value = serde_json::Value> {
    prop_oneof![
        (benchmark_name(), 1u32..20000, finite_f64())
            .prop_map(|(name, d, x)| json!({"name": name, "dimensions": d, "score": x})),
        proptest::collection::vec(benchmark_name(), 0..8)
            .prop_map(|names| json!({ "benchmarks": names })),
        proptest::collection::vec(finite_f64(), 0..8).prop_map(|xs| json!(xs)),
    ]
}

pub fn response() -> impl Strategy<Value = EvalResponse> {
    prop_oneof![
        (id(), finite_f64()).prop_map(|(id, r)| EvalResponse::result(id, r)),
        (id(), payload()).prop_map(|(id, p)| EvalResponse::payload(id, p)),
        (id(), error_code(), "\\PC{0,80}").prop_map(|(id, c, m)| EvalResponse::error(id, c, m)),
    ]
}

/// Either kind of message, as its encoded frame.
#[derive(Debug, Clone)]
pub enum Message {
    Request(EvalRequest),
    Response(EvalResponse),
}

pub fn message() -> impl Strategy<Value = Message> {
    prop_oneof![
        request().prop_map(Message::Request),
        response().prop_map(Message::Response)
    ]
}

/// Splits `len` bytes into consecutive chunk lengths drawn from `cuts`.
pub fn chunk_lengths(len: usize, cuts: &[usize]) -> Vec<usize> {
    let mut points: Vec<usize> = cuts.iter().map(|c| c % (len + 1)).collect();
    points.push(0);
    points.push(len);
    points.sort_unstable();
    points.dedup();
    points.windows(2).map(|w| w[1] - w[0]).collect()
}

pub fn encode(message: &Message) -> Vec<u8> {
    match message {
        Message::Request(m) => bencher::wire::encode_frame(m).unwrap(),
        Message::Response(m) => bencher::wire::encode_frame(m).unwrap(),
    }
}

/// Encodes `messages` into one stream, feeds it back in chunks cut at
/// `cuts`, and checks every message comes back bit-exact.
pub fn check_rechunked_roundtrip(messages: &[Message], cuts: &[usize]) -> Result<(), String> {
    use bencher::wire::{decode_payload, FrameBuffer};

    let frames: Vec<Vec<u8>> = messages.iter().map(encode).collect();
    let stream = frames.concat();
    let mut buf = FrameBuffer::new();
    let mut payloads = Vec::new();
    let mut offset = 0;
    for len in chunk_lengths(stream.len(), cuts) {
        buf.extend(&stream[offset..offset + len]);
        offset += len;
        while let Some(p) = buf.next_payload().map_err(|e| e.to_string())? {
            payloads.push(p);
        }
    }
    if buf.pending() != 0 {
        return Err(format!("{} bytes left over", buf.pending()));
    }
    if payloads.len() != messages.len() {
        return Err(format!(
            "{} payloads for {} messages",
            payloads.len(),
            messages.len()
        ));
    }
    for ((message, frame), payload) in messages.iter().zip(&frames).zip(&payloads) {
        let reencoded = match message {
            Message::Request(original) => {
                let m = decode_payload::<EvalRequest>(payload).map_err(|e| e.reason)?;
                same_request(original, &m)?;
                bencher::wire::encode_frame(&m).unwrap()
            }
            Message::Response(original) => {
                let m = decode_payload::<EvalResponse>(payload).map_err(|e| e.reason)?;
                same_response(original, &m)?;
                bencher::wire::encode_frame(&m).unwrap()
            }
        };
        if &reencoded != frame {
            return Err("re-encoded frame differs".into());
        }
    }
    Ok(())
}

fn same_request(a: &EvalRequest, b: &EvalRequest) -> Result<(), String> {
    let bits = |v: &Option<Vec<Value>>| {
        v.as_ref().map(|v| {
            v.iter()
                .map(|x| (x.kind, x.value.to_bits()))
                .collect::<Vec<_>>()
        })
    };
    if a != b || bits(&a.values) != bits(&b.values) {
        return Err(format!("request changed: {a:?} -> {b:?}"));
    }
    Ok(())
}

fn same_response(a: &EvalResponse, b: &EvalResponse) -> Result<(), String> {
    if a != b || a.result.map(f64::to_bits) != b.result.map(f64::to_bits) {
        return Err(format!("response changed: {a:?} -> {b:?}"));
    }
    Ok(())
}
