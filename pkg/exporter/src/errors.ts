export class LayerNotFound extends Error {
  constructor(layer: string, available: string[]) {
    super(`layer ${layer} not found; available: ${available.join(', ')}`)
    this.name = 'LayerNotFound'
  }
}

export class ShapeError extends Error {
  constructor(message: string) {
    super(message)
    this.name = 'ShapeError'
  }
}
