#!/usr/bin/env node
/** Command line entry: `render --in <results dir> --out <figure dir>`. */

import { SchemaMismatch } from "./csv.js";
import { renderFigures } from "./render.js";

function parseArgs(argv: string[]): { inDir: string; outDir: string } {
    if (argv[0] !== "render") {
        throw new Error(`unknown command ${argv[0] ?? "(none)"}; expected 'render'`);
    }
    let inDir: string | null = null;
    let outDir: string | null = null;
    for (let i = 1; i < argv.length; i += 2) {
        const flag = argv[i];
        const value = argv[i + 1];
        if (value === undefined) {
            throw new Error(`flag ${flag} needs a value`);
        }
        if (flag === "--in") inDir = value;
        else if (flag === "--out") outDir = value;
        else throw new Error(`unknown flag ${flag}`);
    }
    if (inDir === null || outDir === null) {
        throw new Error("usage: render --in <results dir> --out <figure dir>");
    }
    return { inDir, outDir };
}

export function main(argv: string[]): number {
    try {
        const { inDir, outDir } = parseArgs(argv);
        const result = renderFigures(inDir, outDir);
        for (const file of result.written) {
            console.log(file);
        }
        return 0;
    } catch (err) {
        if (err instanceof SchemaMismatch) {
            console.error(`error: schema mismatch on column '${err.column}': ${err.message}`);
        } else {
            console.error(`error: ${(err as Error).message}`);
        }
        return 2;
    }
}

process.exit(main(process.argv.slice(2)));
