#!/usr/bin/env node
import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { render } from "./render";

yargs(hideBin(process.argv))
  .scriptName("plots")
  .command(
    "render <csv>",
    "render an operating-curve CSV into a figure",
    (y) =>
      y
        .positional("csv", { type: "string", demandOption: true, describe: "curve CSV path" })
        .option("out", {
          type: "string",
          demandOption: true,
          describe: "output image path; .svg and .png are written side by side",
        })
        .option("title", { type: "string", describe: "figure title" })
        .option("width", { type: "number", default: 840 })
        .option("height", { type: "number", default: 560 }),
    (argv) => {
      try {
        const result = render(argv.csv, argv.out, {
          title: argv.title,
          width: argv.width,
          height: argv.height,
        });
        console.log(`wrote ${result.svgPath} and ${result.pngPath} (${result.rows} rows)`);
      } catch (err) {
        console.error(err instanceof Error ? err.message : String(err));
        process.exitCode = 1;
      }
    },
  )
  .demandCommand(1)
  .strict()
  .help()
  .parse();
