use super::message::{ErrorCode, Value, ValueKind};

/// Checks a point against a benchmark's dimension and variable type.
///
/// Checks run in priority order: dimension, then type, then range.
pub fn validate_point(
    values: &[Value],
    expected_dim: usize,
    expected_kind: ValueKind,
) -> Result<(), ErrorCode> {
    if values.len() != expected_dim {
        return Err(ErrorCode::DimensionMismatch);
    }
    if values.iter().any(|v| v.kind != expected_kind) {
        return Err(ErrorCode::TypeMismatch);
    }
    if values.iter().any(|v| !v.kind.admits(v.value)) {
        return Err(ErrorCode::ValueOutOfRange);
    }
    Ok(())
}

/// Like [`validate_point`], additionally bounding each index by its
/// dimension's category count.
pub fn validate_point_with_categories(
    values: &[Value],
    expected_dim: usize,
    expected_kind: ValueKind,
    num_categories: Option<&[u32]>,
) -> Result<(), ErrorCode> {
    validate_point(values, expected_dim, expected_kind)?;
    if let Some(sizes) = num_categories {
        if values
            .iter()
            .zip(sizes)
            .any(|(v, &n)| v.value >= f64::from(n))
        {
            return Err(ErrorCode::ValueOutOfRange);
        }
    }
    Ok(())
}

/// Describes a validation failure for the error message field.
pub fn describe_failure(
    code: ErrorCode,
    values: &[Value],
    expected_dim: usize,
    expected_kind: ValueKind,
) -> String {
    match code {
        ErrorCode::DimensionMismatch => {
            format!("expected {expected_dim} values, got {}", values.len())
        }
        ErrorCode::TypeMismatch => {
            let bad = values
                .iter()
                .position(|v| v.kind != expected_kind)
                .unwrap_or(0);
            format!(
                "value {bad} has type {}, expected {expected_kind}",
                values[bad].kind
            )
        }
        ErrorCode::ValueOutOfRange => match values.iter().position(|v| !v.kind.admits(v.value)) {
            Some(i) => format!(
                "value {i} = {} is outside the {} range",
                values[i].value, values[i].kind
            ),
            None => "category index exceeds the number of categories".to_owned(),
        },
        other => other.to_string(),
    }
}
