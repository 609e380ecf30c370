import { describe, expect, it } from "vitest";

import { metricsSummary, percent, readoutLine, readoutText } from "../src/format.js";
import { channelWindow, parseChannelList, positiveInt, positiveReal } from "../src/validate.js";

describe("form validation", () => {
  it("rejects a zero gate width client-side", () => {
    expect(positiveReal("0", "gate width").ok).toBe(false);
    expect(positiveReal("-3", "gate width").ok).toBe(false);
    expect(positiveReal("abc", "gate width").ok).toBe(false);
    expect(positiveReal("20", "gate width").ok).toBe(true);
  });

  it("validates averaging counts as positive integers", () => {
    expect(positiveInt("0", "averaging").ok).toBe(false);
    expect(positiveInt("2.5", "averaging").ok).toBe(false);
    expect(positiveInt("250000", "averaging").ok).toBe(true);
  });

  it("validates channel windows 2..10", () => {
    expect(channelWindow("1").ok).toBe(false);
    expect(channelWindow("11").ok).toBe(false);
    expect(channelWindow("7").ok).toBe(true);
  });

  it("parses bracket channel lists", () => {
    expect(parseChannelList("[6 8 10]")).toEqual([6, 8, 10]);
    expect(parseChannelList("6,8,10")).toEqual([6, 8, 10]);
    expect(parseChannelList("[6 8 77]")).toBeNull();
    expect(parseChannelList("")).toBeNull();
  });
});

describe("display formatting", () => {
  it("formats percentages from server fractions", () => {
    expect(percent(0.9186)).toBe("91.86%");
  });

  it("summarizes a metrics row", () => {
    const line = metricsSummary({
      channels: [6, 8, 10],
      channel_label: "[6 8 10]",
      tn: 1249,
      fn: 188,
      tp: 1999,
      fp: 255,
      sensitivity: 0.914,
      specificity: 0.8305,
      accuracy: 0.88,
      mode: "resubstitution",
    });
    expect(line).toContain("[6 8 10]");
    expect(line).toContain("88.00%");
  });

  it("echoes unreliable pixels verbatim", () => {
    expect(readoutLine("7", { value: 0, valid: false })).toBe("w7: unreliable");
    expect(readoutLine("7", { value: 0.1534, valid: true })).toBe("w7: 0.1534");
    const text = readoutText({
      x: 3,
      y: 4,
      channels: { "2": { value: 0.21, valid: true }, "3": { value: 0, valid: false } },
    });
    expect(text).toContain("(3, 4)");
    expect(text).toContain("w3: unreliable");
  });
});
