import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { parseBenchTable, parseDiagnosticsTable, SchemaMismatch } from "../src/csv.js";
import { renderFigures } from "../src/render.js";
import { renderChart } from "../src/svg.js";

const BENCH = [
    "method,C,N,iad,runtime_s,n_mesh",
    "gbf,4,1000,0.05,1.5,20",
    "gbf,8,1000,0.09,3.2,28",
    "dcfusion,4,1000,0.04,2.5,18",
    "dcfusion,8,1000,0.045,5.1,22",
    "cmc,4,1000,0.2,0.1,0",
    "cmc,8,1000,0.3,0.2,0",
].join("\n");

const DIAGNOSTICS = [
    "iter,t_j,cess,ess,resampled,delta_j",
    "1,0.1,950.0,1000.0,0,0.1",
    "2,0.2,900.0,930.0,0,0.1",
    "3,0.3,870.0,860.0,1,0.1",
].join("\n");

let dir: string;

beforeEach(() => {
    dir = fs.mkdtempSync(path.join(os.tmpdir(), "figkit-"));
});

afterEach(() => {
    fs.rmSync(dir, { recursive: true, force: true });
});

function writeInputs(files: Record<string, string>): string {
    const inDir = path.join(dir, "results");
    fs.mkdirSync(inDir, { recursive: true });
    for (const [name, content] of Object.entries(files)) {
        fs.writeFileSync(path.join(inDir, name), content);
    }
    return inDir;
}

describe("csv parsing", () => {
    it("parses a bench table", () => {
        const rows = parseBenchTable(BENCH);
        expect(rows).toHaveLength(6);
        expect(rows[0]).toEqual({
            method: "gbf",
            C: 4,
            N: 1000,
            iad: 0.05,
            runtime_s: 1.5,
            n_mesh: 20,
        });
    });

    it("treats empty iad as null", () => {
        const rows = parseBenchTable(
            "method,C,N,iad,runtime_s,n_mesh\nmcf,2,100,,0.5,1",
        );
        expect(rows[0].iad).toBeNull();
    });

    it("names the missing column", () => {
        const broken = BENCH.replace("runtime_s", "runtime");
        expect(() => parseBenchTable(broken)).toThrowError(SchemaMismatch);
        try {
            parseBenchTable(broken);
        } catch (err) {
            expect((err as SchemaMismatch).column).toBe("runtime_s");
        }
    });

    it("names a non-numeric column", () => {
        const broken = "iter,t_j,cess,ess,resampled,delta_j\n1,0.1,oops,10,0,0.1";
        try {
            parseDiagnosticsTable(broken);
            expect.unreachable();
        } catch (err) {
            expect((err as SchemaMismatch).column).toBe("cess");
        }
    });

    it("accepts an empty diagnostics file", () => {
        expect(parseDiagnosticsTable("")).toEqual([]);
    });
});

describe("renderFigures", () => {
    it("renders all four figures from full inputs", () => {
        const inDir = writeInputs({ "bench.csv": BENCH, "diagnostics.csv": DIAGNOSTICS });
        const out = path.join(dir, "figs");
        const result = renderFigures(inDir, out);
        expect(result.written).toHaveLength(4);
        expect(result.skipped).toHaveLength(0);
        const names = fs.readdirSync(out).sort();
        expect(names).toEqual([
            "cess_trace.svg",
            "iad_vs_C.svg",
            "iad_vs_budget.svg",
            "mesh_size.svg",
        ]);
        for (const name of names) {
            const svg = fs.readFileSync(path.join(out, name), "utf8");
            expect(svg).toContain("<svg");
            expect(svg).toContain("</svg>");
        }
    });

    it("skips the cess trace when diagnostics are empty", () => {
        const inDir = writeInputs({
            "bench.csv": BENCH,
            "diagnostics.csv": "iter,t_j,cess,ess,resampled,delta_j\n",
        });
        const result = renderFigures(inDir, path.join(dir, "figs"));
        expect(result.written).toHaveLength(3);
        expect(result.skipped).toEqual([
            { figure: "cess_trace", reason: "diagnostics.csv has no rows" },
        ]);
    });

    it("skips the cess trace when diagnostics are missing", () => {
        const inDir = writeInputs({ "bench.csv": BENCH });
        const result = renderFigures(inDir, path.join(dir, "figs"));
        expect(result.written).toHaveLength(3);
        expect(result.skipped[0].figure).toBe("cess_trace");
    });

    it("skips bench figures without bench.csv but never errors", () => {
        const inDir = writeInputs({ "diagnostics.csv": DIAGNOSTICS });
        const result = renderFigures(inDir, path.join(dir, "figs"));
        expect(result.written).toHaveLength(1);
        expect(result.skipped.map((s) => s.figure).sort()).toEqual([
            "iad_vs_C",
            "iad_vs_budget",
            "mesh_size",
        ]);
    });

    it("raises SchemaMismatch for a malformed header", () => {
        const inDir = writeInputs({
            "bench.csv": BENCH.replace("n_mesh", "mesh_n"),
        });
        expect(() => renderFigures(inDir, path.join(dir, "figs"))).toThrowError(
            SchemaMismatch,
        );
    });

    it("is idempotent for identical inputs", () => {
        const inDir = writeInputs({ "bench.csv": BENCH, "diagnostics.csv": DIAGNOSTICS });
        const outA = path.join(dir, "a");
        const outB = path.join(dir, "b");
        renderFigures(inDir, outA);
        renderFigures(inDir, outB);
        for (const name of fs.readdirSync(outA)) {
            const a = fs.readFileSync(path.join(outA, name), "utf8");
            const b = fs.readFileSync(path.join(outB, name), "utf8");
            expect(a).toBe(b);
        }
    });

    it("does not modify its inputs", () => {
        const inDir = writeInputs({ "bench.csv": BENCH, "diagnostics.csv": DIAGNOSTICS });
        const before = fs.readFileSync(path.join(inDir, "bench.csv"), "utf8");
        renderFigures(inDir, path.join(dir, "figs"));
        expect(fs.readFileSync(path.join(inDir, "bench.csv"), "utf8")).toBe(before);
    });
});

describe("real runner outputs", () => {
    const fixtures = path.join(__dirname, "fixtures");

    it("renders all four figures from an actual bench_sweep directory", () => {
        const out = path.join(dir, "real-figs");
        const result = renderFigures(fixtures, out);
        expect(result.skipped).toHaveLength(0);
        expect(fs.readdirSync(out).sort()).toEqual([
            "cess_trace.svg",
            "iad_vs_C.svg",
            "iad_vs_budget.svg",
            "mesh_size.svg",
        ]);
    });

    it("skips gracefully when diagnostics are absent", () => {
        const partial = path.join(dir, "partial");
        fs.mkdirSync(partial);
        fs.copyFileSync(
            path.join(fixtures, "bench.csv"),
            path.join(partial, "bench.csv"),
        );
        const result = renderFigures(partial, path.join(dir, "partial-figs"));
        expect(result.written).toHaveLength(3);
        expect(result.skipped).toEqual([
            { figure: "cess_trace", reason: "diagnostics.csv not found" },
        ]);
    });
});

describe("svg charts", () => {
    it("draws log-scaled axes without non-finite coordinates", () => {
        const svg = renderChart(
            [
                {
                    label: "gbf",
                    color: "#123456",
                    points: [
                        { x: 0.1, y: 0.5 },
                        { x: 10, y: 0.2 },
                        { x: 1000, y: 0.1 },
                    ],
                },
            ],
            { title: "t", xLabel: "x", yLabel: "y", logX: true },
        );
        expect(svg).not.toContain("NaN");
        expect(svg).not.toContain("Infinity");
    });

    it("handles a single point without degenerate scales", () => {
        const svg = renderChart(
            [{ label: "one", color: "#000000", points: [{ x: 2, y: 3 }] }],
            { title: "t", xLabel: "x", yLabel: "y" },
        );
        expect(svg).not.toContain("NaN");
    });
});
