//! Wire protocol shared by clients, the coordinator and workers.
//!
//! Every message is a 4-byte big-endian length followed by that many bytes of
//! UTF-8 JSON. Requests carry `id`, `method`, `benchmark` and `values`;
//! responses carry `id`, `status`, `result`, `payload`, `error_code` and
//! `message`.

mod frame;
mod io;
mod message;
mod validate;

pub use frame::{
    decode_frames, decode_payload, encode_frame, frame_payload, salvage_id, split_frames,
    take_frame, DecodeError, Decoded, FrameBuffer, FrameError, FrameTooLarge, HEADER_LEN,
    MAX_FRAME_LEN,
};
pub use io::{read_frame_blocking, write_frame, write_frame_blocking, FrameReader};
pub use message::{
    ErrorCode, EvalRequest, EvalResponse, InvalidMessage, Method, Status, Value, ValueKind,
    WireMessage, MAX_ID_LEN,
};
pub use validate::{describe_failure, validate_point, validate_point_with_categories};
