#!/usr/bin/env node
/** CLI: export --model <name> --split {train,val,test} --layers a,b,c --out dir */
import yargs from 'yargs'
import { hideBin } from 'yargs/helpers'

import { SplitName } from './dataset.js'
import { runExport } from './export.js'

export async function main(argv: string[]): Promise<number> {
  const args = await yargs(argv)
    .command('export', 'dump layer activations to rogf files')
    .option('model', { type: 'string', demandOption: true })
    .option('split', {
      type: 'string',
      choices: ['train', 'val', 'test'] as const,
      demandOption: true,
    })
    .option('layers', {
      type: 'string',
      demandOption: true,
      describe: 'comma-separated layer names',
    })
    .option('out', { type: 'string', demandOption: true })
    .demandCommand(1)
    .strict()
    .parse()

  try {
    const manifest = runExport({
      modelName: args.model,
      split: args.split as SplitName,
      layers: args.layers.split(',').map(s => s.trim()).filter(Boolean),
      outDir: args.out,
    })
    console.log(
      `exported ${manifest.layers.length} layer(s), N=${manifest.n}, to ${args.out}`,
    )
    return 0
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`)
    return 1
  }
}

const invokedDirectly =
  process.argv[1] && process.argv[1].endsWith('cli.js')
if (invokedDirectly) {
  main(hideBin(process.argv)).then(code => {
    process.exitCode = code
  })
}
