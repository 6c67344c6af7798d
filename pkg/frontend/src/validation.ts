// Client-side form checks. These guard obviously malformed entries
// before any request is made; the server remains the authority.

export interface OutcomeFormValues {
  dose_index: number;
  n_treated: number;
  n_events: number;
}

export function validateCohortForm(values: OutcomeFormValues): string[] {
  const problems: string[] = [];
  if (!Number.isInteger(values.dose_index) || values.dose_index < 0) {
    problems.push("dose must be a non-negative level index");
  }
  if (!Number.isInteger(values.n_treated) || values.n_treated <= 0) {
    problems.push("patients treated must be a positive integer");
  }
  if (!Number.isInteger(values.n_events) || values.n_events < 0) {
    problems.push("events must be a non-negative integer");
  }
  if (
    Number.isInteger(values.n_events) &&
    Number.isInteger(values.n_treated) &&
    values.n_events > values.n_treated
  ) {
    problems.push("events cannot exceed patients treated");
  }
  return problems;
}
