import { describe, expect, it } from "vitest";
import { decimate, parsePly } from "../src/ply.js";

const SAMPLE = `ply
format ascii 1.0
comment partreg v1
element vertex 3
property double x
property double y
property double z
property int part_id
end_header
0.5 1.25 -3.0 0
10.0 0.0 0.25 1
-2.5 4.5 6.0 1
`;

describe("parsePly", () => {
  it("reads positions and part ids", () => {
    const cloud = parsePly(SAMPLE);
    expect(cloud.count).toBe(3);
    expect(Array.from(cloud.positions.slice(0, 3))).toEqual([0.5, 1.25, -3.0]);
    expect(cloud.partIds).not.toBeNull();
    expect(Array.from(cloud.partIds!)).toEqual([0, 1, 1]);
  });

  it("reads clouds without part ids", () => {
    const text = SAMPLE.replace("property int part_id\n", "")
      .replace(" 0\n10.0", "\n10.0")
      .replace(" 1\n-2.5", "\n-2.5")
      .replace("6.0 1", "6.0");
    const cloud = parsePly(text);
    expect(cloud.count).toBe(3);
    expect(cloud.partIds).toBeNull();
  });

  it("rejects non-ply input", () => {
    expect(() => parsePly("obj\n")).toThrow(/not a PLY/);
  });

  it("rejects truncated bodies", () => {
    const truncated = SAMPLE.split("\n").slice(0, -2).join("\n");
    expect(() => parsePly(truncated)).toThrow();
  });

  it("rejects malformed vertex rows", () => {
    expect(() => parsePly(SAMPLE.replace("10.0", "oops"))).toThrow(/bad vertex row/);
  });
});

describe("decimate", () => {
  function grid(n: number) {
    const positions = new Float32Array(n * 3);
    const partIds = new Int32Array(n);
    for (let i = 0; i < n; i++) {
      positions[3 * i] = i;
      partIds[i] = i % 7;
    }
    return { positions, partIds, count: n };
  }

  it("returns the input untouched under budget", () => {
    const cloud = grid(100);
    expect(decimate(cloud, 500_000)).toBe(cloud);
  });

  it("uniform stride above budget", () => {
    const cloud = grid(1000);
    const out = decimate(cloud, 100);
    expect(out.count).toBeLessThanOrEqual(100);
    expect(out.positions[0]).toBe(0);
    expect(out.positions[3]).toBe(10); // stride 10
    expect(out.partIds![1]).toBe(10 % 7);
  });
});
