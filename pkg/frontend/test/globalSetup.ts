// Spawns the fixture API server once for the whole test run and provides
// its URL to the tests.

import { spawn, type ChildProcess } from 'node:child_process'
import { fileURLToPath } from 'node:url'
import path from 'node:path'
import type { TestProject } from 'vitest/node'

let child: ChildProcess | undefined

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms))

export default async function setup(project: TestProject): Promise<void> {
  const here = path.dirname(fileURLToPath(import.meta.url))
  child = spawn('python3', [path.join(here, 'server.py')], {
    stdio: ['ignore', 'pipe', 'inherit'],
  })

  const port = await new Promise<number>((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error('fixture server gave no port')), 30000)
    let buffer = ''
    child!.stdout!.on('data', (chunk: Buffer) => {
      buffer += chunk.toString()
      const match = buffer.match(/PORT (\d+)/)
      if (match) {
        clearTimeout(timer)
        resolve(Number(match[1]))
      }
    })
    child!.on('exit', (code) => {
      clearTimeout(timer)
      reject(new Error(`fixture server exited early (code ${code})`))
    })
  })

  const url = `http://127.0.0.1:${port}`
  const deadline = Date.now() + 30000
  for (;;) {
    try {
      const resp = await fetch(`${url}/api/progress`)
      if (resp.ok) break
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) throw new Error('fixture server never became healthy')
    await sleep(100)
  }
  project.provide('apiUrl', url)
}

export async function teardown(): Promise<void> {
  if (child) {
    child.stdout?.destroy()
    child.kill('SIGKILL')
  }
}
