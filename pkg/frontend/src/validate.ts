// Client-side form validation; the server revalidates everything.

export interface FieldCheck {
  ok: boolean;
  message?: string;
}

export function positiveReal(raw: string, name: string): FieldCheck {
  const value = Number(raw);
  if (!Number.isFinite(value) || value <= 0) {
    return { ok: false, message: `${name} must be a positive number` };
  }
  return { ok: true };
}

export function positiveInt(raw: string, name: string): FieldCheck {
  const value = Number(raw);
  if (!Number.isInteger(value) || value < 1) {
    return { ok: false, message: `${name} must be a positive integer` };
  }
  return { ok: true };
}

export function nonnegativeReal(raw: string, name: string): FieldCheck {
  const value = Number(raw);
  if (!Number.isFinite(value) || value < 0) {
    return { ok: false, message: `${name} must be zero or more` };
  }
  return { ok: true };
}

export function channelWindow(raw: string): FieldCheck {
  const value = Number(raw);
  if (!Number.isInteger(value) || value < 2 || value > 10) {
    return { ok: false, message: "channel window must be 2..10" };
  }
  return { ok: true };
}

/** Parse "[6 8 10]" / "6 8 10" / "6,8,10" into window numbers. */
export function parseChannelList(raw: string): number[] | null {
  const body = raw.replace(/[[\]]/g, "").trim();
  if (!body) {
    return null;
  }
  const parts = body.split(/[\s,]+/).map(Number);
  if (parts.some((v) => !Number.isInteger(v) || v < 2 || v > 10)) {
    return null;
  }
  return parts;
}
